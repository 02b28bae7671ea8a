import math

import numpy as np
import pytest

from harnacklab import geometry as geo
from harnacklab import harnack as hk
from harnacklab.errors import CertificateError, ParameterError
from harnacklab.flowcheck import ConditionKind, FlowParams, certify_flow, make_grid
from harnacklab.heat import POLAR_CELLS, make_grid1d, solve_heat


@pytest.fixture(scope="module")
def circle_run():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 128)
    f = solve_heat(1 + 0.5 * np.cos(grid.x), fam, pot, (0.0, 1.0), "crank_nicolson", n_steps=200, grid=grid,
                   store_every=2)
    params = FlowParams(K=0.0, m=2, alpha=2.0)
    g = make_grid(fam, [0.0, 1.0], 16)
    sp_cert = certify_flow(fam, pot, params, ConditionKind.SUPER_PERELMAN, g, threshold=0.0)
    va_cert = certify_flow(fam, pot, params, ConditionKind.VARIANT_ALPHA, g)
    return f, params, sp_cert, va_cert


@pytest.fixture(scope="module")
def sphere_run():
    fam = geo.ricci_flow_sphere(2, 1.0)
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 100, POLAR_CELLS)
    f = solve_heat(2 + np.cos(grid.x), fam, pot, (0.0, 0.2), "crank_nicolson", n_steps=200, grid=grid,
                   store_every=4)
    params = FlowParams(K=0.0, m=4, alpha=2.0, gamma=1.0)
    cert = certify_flow(fam, pot, params, ConditionKind.VARIANT_ALPHA, make_grid(fam, [0.0, 0.1, 0.2], 12))
    return f, params, cert


def test_hamilton_passes_and_relaxed_dominates(circle_run):
    f, params, cert, _ = circle_run
    sharp, relaxed = hk.hamilton_margin(f, 0.0, cert)
    assert sharp.passed and relaxed.passed
    assert relaxed.worst_margin >= sharp.worst_margin - 1e-12
    assert relaxed.values["elementary_passed"]


def test_hamilton_needs_certificate(circle_run):
    f, params, _, va = circle_run
    with pytest.raises(CertificateError):
        hk.hamilton_margin(f, 0.0, None)
    with pytest.raises(CertificateError):
        hk.hamilton_margin(f, 0.0, va)


def test_hamilton_rejects_small_sup_bound(circle_run):
    f, _, cert, _ = circle_run
    with pytest.raises(ParameterError):
        hk.hamilton_margin(f, 0.0, cert, sup_bound=1.0)


def test_hamilton_fails_on_violating_data(circle_run):
    f, _, cert, _ = circle_run
    # a non-solution with steep gradients breaks the estimate, so the check must see it
    bad = f.rescaled(1.0)
    bad.u = bad.u * np.exp(0.8 * np.sin(8 * f.x))[None, :]
    sharp, _ = hk.hamilton_margin(bad, 0.0, cert)
    assert not sharp.passed


def test_integrated_harnack_delta_limits(circle_run, rng):
    f, _, cert, _ = circle_run
    pairs = hk.random_node_pairs(f, 30, rng)
    r1 = hk.integrated_harnack_margin(f, 0.0, 1.0, pairs, cert)
    rinf = hk.integrated_harnack_margin(f, 0.0, math.inf, pairs, cert)
    assert r1.passed and rinf.passed
    # delta = inf reduces to u <= A
    u_x = f.u[f.times > 0.05][:, pairs[:, 0]]
    assert rinf.worst_margin == pytest.approx(math.log(f.sup_bound_A / u_x.max()), abs=1e-12)


def test_li_yau_compact_on_sphere(sphere_run):
    f, params, cert = sphere_run
    rep = hk.li_yau_margin(f, cert, params, "compact")
    assert rep.passed
    assert rep.values["D"] == pytest.approx(4 * cert.A_sq + 4 * 1.0**2, rel=1e-12)


def test_li_yau_rejects_mismatched_certificate(sphere_run):
    f, params, cert = sphere_run
    with pytest.raises(CertificateError):
        hk.li_yau_margin(f, cert, FlowParams(K=0.0, m=5, alpha=2.0, gamma=1.0))


def test_parabolic_harnack_pairs(sphere_run, rng):
    f, params, cert = sphere_run
    pairs = hk.random_space_time_pairs(f, 40, rng)
    assert np.all(pairs[:, 0] < pairs[:, 2])
    rep = hk.parabolic_harnack_margin(f, cert, params, pairs)
    assert rep.passed
    assert rep.values["C"] >= 1.0
    swapped = pairs[:, [2, 3, 0, 1]]
    with pytest.raises(ParameterError):
        hk.parabolic_harnack_margin(f, cert, params, swapped)


def test_laplacian_comparison_sphere():
    fam = geo.round_sphere(2, 1.0)
    pot = geo.PotentialFamily.zero(fam)
    pts = make_grid(fam, [0.0], 12).points
    inner, rho_form, cut = hk.laplacian_comparison_margin(fam, pot, 2.0, 0.0, 0.0, [1.0, 1.0], pts, [0.0])
    assert inner.passed and cut.passed
    assert not rho_form.passed  # the rho-form variant fails near the base point when K1 = 0


def test_discretisation_tolerance(circle_run):
    f = circle_run[0]
    assert hk.discretisation_tolerance(f) == pytest.approx(10 * (f.grid.dx**2 + f.dt) + 1e-9)
