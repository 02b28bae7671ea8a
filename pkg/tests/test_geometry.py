import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab import geometry as geo
from harnacklab.errors import DomainError, ParameterError

from conftest import sphere_points


def test_round_sphere_is_einstein(sphere):
    pts = sphere_points()
    ric = sphere.ricci(0.0, pts)
    g = sphere.metric(0.0, pts)
    np.testing.assert_allclose(ric, g, atol=1e-12)  # Ric = (n-1)/r^2 g with n = 2, r = 1


def test_analytic_ricci_matches_oracle():
    fam = geo.ricci_flow_sphere(3, 1.0)
    x = np.array([0.9, 1.3, 2.0])
    oracle = geo.curvature_oracle(fam, 0.05, x)
    np.testing.assert_allclose(fam.ricci(0.05, x[None])[0], oracle, atol=1e-5)


def test_ricci_flow_rate_is_minus_ricci():
    fam = geo.ricci_flow_sphere(2, 1.0)
    pts = sphere_points()
    for t in (0.0, 0.1, 0.2):
        np.testing.assert_allclose(fam.metric_rate(t, pts), -fam.ricci(t, pts), atol=1e-12)


def test_christoffel_symmetric_in_lower_indices(sphere):
    gam = sphere.christoffel(0.0, sphere_points())
    np.testing.assert_allclose(gam, np.swapaxes(gam, -1, -2), atol=1e-14)


def test_flat_circle_has_zero_curvature(circle):
    x = np.linspace(0, 6, 7)[:, None]
    assert np.all(circle.ricci(0.0, x) == 0.0)
    assert np.all(circle.christoffel(0.0, x) == 0.0)


def test_time_window_enforced():
    fam = geo.ricci_flow_sphere(2, 1.0)
    with pytest.raises(DomainError):
        fam.check_time(0.6)


def test_static_flat_refuses_sphere():
    with pytest.raises(ParameterError):
        geo.static_flat(geo.Chart.sphere_polar(2))


def test_bakry_emery_quadratic_potential():
    fam = geo.static_flat(geo.Chart.line(-5, 5))
    pot = geo.PotentialFamily.quadratic(fam, 2.0)
    x = np.array([[0.0], [1.5]])
    np.testing.assert_allclose(geo.bakry_emery_ricci(fam, pot, geo.M_INF, 0.0, x)[..., 0, 0], 2.0)
    ric_m = geo.bakry_emery_ricci(fam, pot, 3.0, 0.0, x)[..., 0, 0]
    np.testing.assert_allclose(ric_m, 2.0 - (2.0 * x[:, 0]) ** 2 / 2.0)


def test_perelman_compensated_rate_is_trace():
    fam = geo.conformal_exponential(geo.Chart.circle(), 0.7)
    pot = geo.PotentialFamily.perelman_compensated(fam)
    x = np.array([[0.3], [2.0]])
    np.testing.assert_allclose(pot.dphi_dt(0.4, x), 0.7, atol=1e-12)  # tr_g h = n * rate


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 6.2), st.floats(0.0, 6.2), st.floats(0.0, 6.2))
def test_circle_distance_is_a_metric(a, b, c):
    fam = geo.static_flat(geo.Chart.circle())
    d = lambda p, q: float(geo.distance(fam, 0.0, np.array([p]), np.array([q])))  # noqa: E731
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, b) <= math.pi + 1e-12
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 2.9), st.floats(0.0, 6.2), st.floats(0.2, 2.9), st.floats(0.0, 6.2), st.floats(0.0, 0.2))
def test_sphere_distance_scales_with_conformal_factor(t1, p1, t2, p2, t):
    fam = geo.ricci_flow_sphere(2, 1.0)
    x, y = np.array([t1, p1]), np.array([t2, p2])
    d = float(geo.distance(fam, t, x, y))
    d0 = float(geo.distance(fam, 0.0, x, y))
    assert d == pytest.approx(math.sqrt(1 - 2 * t) * d0, rel=1e-10, abs=1e-12)
    assert 0.0 <= d0 <= math.pi + 1e-12


def test_distance_rate_under_ricci_flow():
    fam = geo.ricci_flow_sphere(2, 1.0)
    x, y = np.array([1.0, 0.5]), np.array([2.0, 1.5])
    d0 = float(geo.distance(fam, 0.0, x, y))
    # d(t) = sqrt(1 - 2t) d0, so d'(0) = -d0
    assert geo.distance_rate(fam, 0.0, x, y) == pytest.approx(-d0, rel=1e-6)


def test_cutoff_profile_properties():
    prof = geo.cutoff_eta()
    assert all(prof.verify().values())
    assert prof.C1 > 0 and prof.C2 > 0
    assert geo.cutoff_eta(C1_target=prof.C1 * 2).meets_targets
    assert not geo.cutoff_eta(C1_target=prof.C1 / 2).meets_targets


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 2.0))
def test_cutoff_gradient_bound_pointwise(r):
    prof = geo.cutoff_eta(grid_points=2001)
    val = float(prof(r))
    if val > 1e-10:
        assert float(prof.d1(r)) ** 2 <= prof.C1 * val * (1 + 1e-9)
    assert float(prof.d2(r)) >= -prof.C2 * (1 + 1e-9)
