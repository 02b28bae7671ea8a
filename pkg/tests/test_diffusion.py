import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab import diffusion as dif
from harnacklab import geometry as geo
from harnacklab.errors import ParameterError
from harnacklab.heat import make_grid1d, solve_heat


@pytest.fixture(scope="module")
def circle_field():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 128)
    return solve_heat(1 + 0.5 * np.cos(grid.x), fam, pot, (0.0, 1.0), "crank_nicolson", n_steps=100, grid=grid)


def test_coefficients_flat_and_ou():
    fam = geo.static_flat(geo.Chart.line(-5, 5))
    b, k = dif.coefficients(fam, geo.PotentialFamily.zero(fam), 0.0, np.array([0.5]))
    assert b[0] == 0.0 and k[0] == 1.0
    b, _ = dif.coefficients(fam, geo.PotentialFamily.quadratic(fam, 1.0), 0.0, np.array([0.5, -2.0]))
    np.testing.assert_allclose(b, [-0.5, 2.0])


def test_sphere_drift_is_cot_theta():
    fam = geo.round_sphere(2, 1.0)
    th = np.array([0.5, 1.0, 2.0])
    b, k = dif.coefficients(fam, geo.PotentialFamily.zero(fam), 0.0, th)
    np.testing.assert_allclose(b, 1 / np.tan(th), rtol=1e-12)
    np.testing.assert_allclose(k, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-3, 0), st.floats(0.1, 5))
def test_reflection_stays_in_interval(x, lo, width):
    y, hit = dif._reflect(np.array([x]), lo, lo + width)
    assert lo - 1e-9 <= y[0] <= lo + width + 1e-9
    assert bool(hit[0]) == (x < lo or x > lo + width)


def test_bitwise_reproducible_across_threads():
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    kw = dict(n_paths=10000, ds=0.05, seed=7, block_size=1024)
    a = dif.simulate(fam, pot, 1.0, (0.0, 0.5), threads=1, **kw)
    b = dif.simulate(fam, pot, 1.0, (0.0, 0.5), threads=4, **kw)
    c = dif.simulate(fam, pot, 1.0, (0.0, 0.5), threads=1, **{**kw, "seed": 8})
    assert np.array_equal(a.terminal, b.terminal)
    assert not np.array_equal(a.terminal, c.terminal)


def test_antithetic_pairs_are_mirrored():
    fam = geo.static_flat(geo.Chart.line(-50, 50))
    pot = geo.PotentialFamily.zero(fam)
    ens = dif.simulate(fam, pot, 0.0, (0.0, 0.1), n_paths=1000, ds=0.1, block_size=500, antithetic=True)
    np.testing.assert_allclose(ens.terminal[0::2], -ens.terminal[1::2])
    with pytest.raises(ParameterError):
        dif.EnsembleParams(n_paths=1001, antithetic=True)


def test_brownian_variance_on_line():
    fam = geo.static_flat(geo.Chart.line(-50, 50))
    pot = geo.PotentialFamily.zero(fam)
    ens = dif.simulate(fam, pot, 0.0, (0.0, 1.0), n_paths=40000, ds=0.1)
    assert ens.terminal.var() == pytest.approx(2.0, rel=0.03)  # generator d^2/dx^2 gives variance 2s


def test_feynman_kac_and_martingale_on_circle(circle_field):
    ens = dif.simulate(circle_field.family, circle_field.pot, 1.0, (0.0, 1.0), n_paths=20000, ds=0.01,
                       record_every=20)
    fk = dif.feynman_kac_check(ens, circle_field)
    exact = 1 + 0.5 * math.cos(1.0) * math.exp(-1.0)
    assert fk["passed"]
    assert fk["reference"] == pytest.approx(exact, abs=1e-3)
    mart = dif.martingale_inequality_check(ens, circle_field, 0.0)
    assert mart["passed"]
    assert mart["profile"]


def test_feynman_kac_span_mismatch(circle_field):
    ens = dif.simulate(circle_field.family, circle_field.pot, 1.0, (0.0, 0.5), n_paths=100, ds=0.1)
    with pytest.raises(ParameterError):
        dif.feynman_kac_check(ens, circle_field)


def test_mixing_to_uniform_on_circle():
    fam = geo.static_flat(geo.Chart.circle())
    ens = dif.simulate(fam, geo.PotentialFamily.zero(fam), 0.0, (0.0, 5.0), n_paths=40000, ds=0.05)
    assert dif.total_variation_to_uniform(ens.terminal, 2 * math.pi) < 0.03


def test_terminal_csv(tmp_path):
    fam = geo.static_flat(geo.Chart.line(-5, 5))
    ens = dif.simulate(fam, geo.PotentialFamily.zero(fam), 0.0, (0.0, 0.1), n_paths=10, ds=0.05)
    p = tmp_path / "t.csv"
    ens.dump_terminal_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "path,x_terminal,valid,reflections"
    assert len(lines) == 11
