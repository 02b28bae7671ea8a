import math

import numpy as np
import pytest

from harnacklab import geometry as geo
from harnacklab.errors import ParameterError
from harnacklab.flowcheck import (
    ConditionKind,
    FlowParams,
    certify_flow,
    constant_D,
    constant_E,
    make_grid,
    metric_equivalence_constant,
    wire_cutoff_constants,
)


def _cert(fam, pot, params, kind, times=(0.0, 0.1, 0.2), n=16, **kw):
    return certify_flow(fam, pot, params, kind, make_grid(fam, times, n), **kw)


def test_ricci_flow_is_exactly_perelman():
    fam = geo.ricci_flow_sphere(2, 1.0)
    cert = _cert(fam, geo.PotentialFamily.zero(fam), FlowParams(K=0.0, m=4, alpha=2.0, gamma=1.0),
                 ConditionKind.SUPER_PERELMAN)
    assert cert.passed
    assert abs(cert.min_margin) < 1e-10


def test_ricci_flow_variant_constants():
    fam = geo.ricci_flow_sphere(2, 1.0)
    params = FlowParams(K=0.0, m=4, alpha=2.0, gamma=1.0)
    cert = _cert(fam, geo.PotentialFamily.zero(fam), params, ConditionKind.VARIANT_ALPHA)
    assert cert.passed
    assert cert.B_const < 1e-6  # second Bianchi identity
    assert cert.K1 == 0.0
    # |h|^2 + (tr h)^2/(m-n) with h = -g/(1-2t) peaks at t = 0.2
    c = 1 - 2 * 0.2
    assert cert.A_sq == pytest.approx((2 + 4 / 2) / c**2, rel=1e-9)


def test_m_equal_n_with_trace_gives_infinite_A():
    fam = geo.ricci_flow_sphere(2, 1.0)
    cert = _cert(fam, geo.PotentialFamily.zero(fam), FlowParams(m=2.0), ConditionKind.SUPER_PERELMAN_M)
    assert math.isinf(cert.A_sq)
    assert any("infinite" in n for n in cert.notes)


def test_expanding_circle_needs_K_for_variant():
    fam = geo.conformal_exponential(geo.Chart.circle(), 1.0)
    pot = geo.PotentialFamily.zero(fam)
    assert not _cert(fam, pot, FlowParams(K=0.5, m=2), ConditionKind.VARIANT_ALPHA).passed
    cert = _cert(fam, pot, FlowParams(K=1.0, m=2), ConditionKind.VARIANT_ALPHA)
    assert cert.passed and abs(cert.min_margin) < 1e-9


def test_quadratic_potential_super_perelman_margin():
    fam = geo.static_flat(geo.Chart.line(-3, 3))
    cert = _cert(fam, geo.PotentialFamily.quadratic(fam, 1.5), FlowParams(), ConditionKind.SUPER_PERELMAN,
                 times=(0.0,))
    assert cert.min_margin == pytest.approx(1.5, abs=1e-9)


def test_flow_params_validation():
    with pytest.raises(ParameterError):
        FlowParams(K=-1.0)
    with pytest.raises(ParameterError):
        FlowParams(alpha=1.0).require_li_yau()
    with pytest.raises(ParameterError):
        FlowParams(m=geo.M_INF).require_li_yau()
    assert FlowParams(K=2.0, alpha=3.0).gamma == pytest.approx(8.0)


def test_constant_D_variants():
    fam = geo.static_flat(geo.Chart.circle())
    params = FlowParams(K=1.0, m=2, alpha=2.0, gamma=1.0)
    cert = _cert(fam, geo.PotentialFamily.zero(fam), params, ConditionKind.VARIANT_ALPHA, times=(0.0,))
    base = 2 * (2 + 1) ** 2
    assert constant_D(cert, params, "compact") == pytest.approx(base)
    cert.B_const = 2.0
    assert constant_D(cert, params, "compact") == pytest.approx(base + 8.0)
    assert constant_D(cert, params, "complete") == pytest.approx(base + 2.0)
    assert constant_D(cert, params, "safe") == pytest.approx(base + 8.0)
    with pytest.raises(ParameterError):
        constant_D(cert, params, "other")


def test_cutoff_wiring_and_E():
    b = wire_cutoff_constants(2.0, 3.0, 4.0)
    assert (b.C4, b.C5, b.C6) == (6.0, 6.0, 7.0)
    b2 = wire_cutoff_constants(2.0, 3.0, 4.0, alpha=2.0, include_proof_term=True)
    assert b2.C6 == pytest.approx(7.0 + 4 * 4 * 9 / 4)

    class C:
        K1, K2 = 4.0, 1.0

    assert constant_E(C, None, math.inf, b) == pytest.approx(6.0 * 3.0)
    assert constant_E(C, None, 2.0, b) == pytest.approx(18.0 + 3.0 + 7.0 / 4)


def test_metric_equivalence_constant_for_ricci_flow():
    fam = geo.ricci_flow_sphere(2, 1.0)
    grid = make_grid(fam, [0.0, 0.1, 0.2], 8)
    assert metric_equivalence_constant(fam, fam, 0.0, grid) == pytest.approx(1 / 0.6, rel=1e-12)
