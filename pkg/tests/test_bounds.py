import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab import harnack as hk
from harnacklab.errors import ParameterError


@pytest.mark.parametrize("K", [0.0, 1e-8, 1.0, 10.0])
def test_psi_solves_its_ode(K):
    t = np.linspace(1e-3, 5.0, 500)
    res = hk.psi_derivative(t, K) + 2 * K * hk.psi_factor(t, K) - 1.0
    assert np.max(np.abs(res)) < 1e-12
    with pytest.raises(ParameterError):
        hk.psi_factor(0.0, K)


def test_psi_small_K_limit():
    t = np.linspace(0.1, 3.0, 20)
    np.testing.assert_allclose(hk.psi_factor(t, 1e-12), t, rtol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(1e-4, 100.0))
def test_elementary_bound(K, t):
    assert hk.hamilton_coefficient(t, K) <= 2 * K + 1 / t + 1e-12 * (2 * K + 1 / t)


def test_sqrtk_coth_limits():
    rho = np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(hk.sqrtk_coth(0.0, rho), 1 / rho)
    np.testing.assert_allclose(hk.sqrtk_coth(4.0, rho), 2 / np.tanh(2 * rho))
    with pytest.raises(ParameterError):
        hk.sqrtk_coth(-1.0, rho)


def test_compact_bound_matches_symbolic():
    expr, (t, m, a, D) = hk.compact_bound_expr()
    val = float(expr.subs({t: 0.3, m: 4, a: 2, D: 48.4}))
    assert hk.li_yau_bound(0.3, 4, 2.0, 48.4) == pytest.approx(val, rel=1e-14)


def test_li_yau_bound_reduces_to_classical():
    # D = 0, E = 0: m alpha^2 / (2t)
    assert hk.li_yau_bound(0.5, 3, 1.5, 0.0) == pytest.approx(3 * 2.25 / 1.0)
    with pytest.raises(ParameterError):
        hk.li_yau_bound(0.0, 3, 2.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(1.1, 5.0), st.floats(0.0, 20.0), st.floats(1e-3, 5.0))
def test_static_reduction_at_matching_gamma(t, alpha, C4, K):
    m = 3.0
    gamma = hk.matching_gamma(t, alpha, C4, K)
    D = m * (2 * K + gamma) ** 2 / (alpha - 1) ** 2
    full = float(hk.li_yau_bound(t, m, alpha, D, C4 * math.sqrt(K)))
    red = float(hk.static_reduction(t, m, alpha, C4, K))
    assert full == pytest.approx(red, rel=1e-10)


def test_static_pre_reduction_is_gamma_zero_case():
    t, m, alpha, C4, K = 0.7, 3.0, 2.0, 5.0, 0.4
    D = m * (2 * K) ** 2 / (alpha - 1) ** 2
    assert hk.static_pre_reduction(t, m, alpha, C4, K) == pytest.approx(
        float(hk.li_yau_bound(t, m, alpha, D, C4 * math.sqrt(K))), rel=1e-14)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-5, 5), st.floats(0.01, 10))
def test_algebraic_lemma(a, b, c, x, gamma):
    m = float(hk.algebraic_lemma_margin(a, b, c, x, gamma))
    scale = 1 + abs(a * x**4) + abs(b * x**2) + abs(c * x) + (b - gamma) ** 2 / (4 * a) + c**2 / (4 * gamma)
    assert m >= -1e-12 * scale


def test_algebraic_lemma_worked_case():
    # a = 1, b = -2, c = 1, gamma = 1: minimum of the quartic is about -2.056 >= -2.5
    x = np.linspace(-3, 3, 600001)
    q = x**4 - 2 * x**2 + x
    assert q.min() == pytest.approx(-2.0562, abs=1e-3)
    assert q.min() >= -(9 / 4 + 1 / 4)


def test_c7_constants():
    class Cert:
        pass

    class P:
        m, alpha = 4.0, 2.0

    proof, shown = hk.c7_constants(Cert, P, 48.0, 1.0)
    assert proof == pytest.approx(4 * 1.0 + 2 * math.sqrt(12.0))
    assert shown == pytest.approx(1.0 + math.sqrt(3.0))
