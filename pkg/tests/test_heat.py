import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab import geometry as geo
from harnacklab.errors import ParameterError, ShapeError, StabilityError, TruncationError
from harnacklab.heat import (
    NODES,
    POLAR_CELLS,
    derive_fields,
    dirichlet_form,
    make_grid1d,
    read_binary,
    sample_analytic,
    solve_heat,
    weighted_inner,
    witten_apply,
)
from harnacklab.symbolic import T, chart_symbols

(X,) = chart_symbols(1)


def _gauss(x, t):
    return np.exp(-(x**2) / (4 * t)) / np.sqrt(4 * np.pi * t)


def test_operator_annihilates_constants_and_is_symmetric(rng):
    fam = geo.static_flat(geo.Chart.line(-4, 4))
    pot = geo.PotentialFamily.quadratic(fam, 1.0)
    grid = make_grid1d(fam, 101)
    np.testing.assert_allclose(witten_apply(np.ones(grid.n), fam, pot, 0.0, grid), 0.0, atol=1e-12)
    u, v = rng.standard_normal(grid.n), rng.standard_normal(grid.n)
    lu = witten_apply(u, fam, pot, 0.0, grid)
    lv = witten_apply(v, fam, pot, 0.0, grid)
    a = weighted_inner(lu, v, fam, pot, 0.0, grid)
    b = weighted_inner(u, lv, fam, pot, 0.0, grid)
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(-dirichlet_form(u, v, fam, pot, 0.0, grid), rel=1e-10)


def test_circle_cosine_decay_matches_exact():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 256)
    f = solve_heat(1 + 0.5 * np.cos(grid.x), fam, pot, (0.0, 1.0), "crank_nicolson", n_steps=200, grid=grid)
    exact = 1 + 0.5 * np.cos(grid.x) * math.exp(-1.0)
    assert np.max(np.abs(f.u[-1] - exact)) < 1e-4


def test_crank_nicolson_is_second_order_in_time():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 64)
    u0 = 1 + 0.5 * np.cos(grid.x)
    ref = solve_heat(u0, fam, pot, (0.0, 1.0), "crank_nicolson", n_steps=3200, grid=grid).u[-1]
    errs = [np.max(np.abs(solve_heat(u0, fam, pot, (0.0, 1.0), "crank_nicolson", n_steps=n, grid=grid).u[-1] - ref))
            for n in (20, 40)]
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_explicit_scheme_refuses_unstable_step():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 200)
    with pytest.raises(StabilityError):
        solve_heat(np.ones(grid.n), fam, pot, (0.0, 1.0), "explicit", n_steps=10, grid=grid)


def test_nonpositive_data_rejected(circle):
    pot = geo.PotentialFamily.zero(circle)
    grid = make_grid1d(circle, 16)
    with pytest.raises(ParameterError):
        solve_heat(np.zeros(grid.n), circle, pot, (0.0, 1.0), n_steps=4, grid=grid)


def test_truncation_error_when_mass_leaves():
    fam = geo.static_flat(geo.Chart.line(-2, 2))
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 201)
    with pytest.raises(TruncationError):
        solve_heat(_gauss(grid.x, 0.5) + 1e-12, fam, pot, (0.0, 1.0), n_steps=100, grid=grid, flux_tol=1e-8)


def test_implicit_euler_preserves_positivity_and_max_principle():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.cosine(fam, 0.5)
    grid = make_grid1d(fam, 128)
    u0 = 1 + 0.9 * np.sign(np.sin(grid.x))
    u0 = np.maximum(u0, 1e-3)
    f = solve_heat(u0, fam, pot, (0.0, 0.5), n_steps=50, grid=grid)
    assert np.all(f.u > 0)
    assert f.u.max() <= u0.max() * (1 + 1e-12)
    assert f.u.min() >= u0.min() * (1 - 1e-12)


def test_perelman_mass_conserved_with_implicit_euler():
    fam = geo.conformal_exponential(geo.Chart.circle(), 0.5)
    pot = geo.PotentialFamily.perelman_compensated(fam, geo.PotentialFamily.cosine(fam, 0.3))
    grid = make_grid1d(fam, 128)
    f = solve_heat(1 + 0.5 * np.cos(grid.x), fam, pot, (0.0, 1.0), n_steps=100, grid=grid)
    m = np.array([f.mass(k) for k in range(f.n_t)])
    assert np.max(np.abs(np.diff(m))) / m[0] < 1e-12


def test_sphere_polar_cells_conserve_mass():
    fam = geo.round_sphere(2, 1.0)
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 100, POLAR_CELLS)
    f = solve_heat(2 + np.cos(grid.x), fam, pot, (0.0, 0.5), "crank_nicolson", n_steps=50, grid=grid)
    m = np.array([f.mass(k) for k in range(f.n_t)])
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-12
    # cos(theta) is the first eigenfunction on S^2: eigenvalue -2
    exact = 2 + np.cos(grid.x) * math.exp(-1.0)
    assert np.max(np.abs(f.u[-1] - exact)) < 1e-3


def test_gaussian_li_yau_quantity_near_sharp():
    fam = geo.static_flat(geo.Chart.line(-8, 8))
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 801, NODES)
    f = solve_heat(_gauss(grid.x, 0.1), fam, pot, (0.1, 1.0), "crank_nicolson", n_steps=900, grid=grid,
                   t_origin=0.0)
    d = derive_fields(f)
    tau = d.tau[:, None]
    win = np.abs(grid.x)[None, :] <= 2 * np.sqrt(2 * tau)
    rel = np.abs(1 - 2 * tau * d.li_yau_quantity(1.0))[win & d.valid()]
    assert np.max(rel) < 5e-3


def test_analytic_field_derivatives_exact():
    fam = geo.static_flat(geo.Chart.line(-5, 5))
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 51)
    expr = sp.exp(-(X**2) / (4 * T)) / sp.sqrt(4 * sp.pi * T)
    f = sample_analytic(expr, fam, pot, np.linspace(0.2, 1.0, 5), grid)
    d = derive_fields(f)
    np.testing.assert_allclose(d.li_yau_quantity(1.0) * 2 * d.tau[:, None], 1.0, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(n_x=st.integers(3, 40), n_t=st.integers(3, 10), scale=st.floats(0.1, 10.0))
def test_binary_roundtrip(tmp_path_factory, n_x, n_t, scale):
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, n_x)
    u = scale * (1.5 + np.cos(np.add.outer(np.arange(n_t), grid.x)))
    from harnacklab.heat import SpaceTimeField

    f = SpaceTimeField(np.linspace(0, 1, n_t), grid, u, fam, pot)
    path = tmp_path_factory.mktemp("bin") / "f.bin"
    f.to_binary(path)
    times, x, v = read_binary(path)
    assert np.array_equal(v, u)
    np.testing.assert_allclose(x, grid.x, rtol=0, atol=1e-12)
    np.testing.assert_allclose(times, f.times, atol=1e-15)


def test_binary_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTFIELD" + bytes(100))
    with pytest.raises(ShapeError):
        read_binary(p)
