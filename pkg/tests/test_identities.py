import numpy as np
import pytest

from harnacklab import harnack as hk
from harnacklab.harnack.testcases import BUILDERS, all_cases


@pytest.mark.parametrize("name", ["gaussian_line", "ricci_flow_s2", "sphere_nonradial"])
def test_identity_case_passes(name):
    results = hk.run_identity_case(BUILDERS[name]())
    failed = [str(r) for r in results if not r.passed]
    assert not failed, failed


def test_convergence_order_detects_second_order():
    res = hk.convergence_study("quad", lambda e: (np.array([3 * e**2]), np.array([1.0])))
    assert res.order == pytest.approx(2.0)
    assert res.passed


def test_convergence_study_rejects_first_order():
    res = hk.convergence_study("lin", lambda e: (np.array([e]), np.array([0.0])))
    assert res.order == pytest.approx(1.0)
    assert not res.passed


def test_wrong_identity_is_caught():
    # a residual that does not vanish as eps -> 0 must fail
    res = hk.convergence_study("bias", lambda e: (np.array([1e-3 + e**2]), np.array([0.0])))
    assert not res.passed


def test_all_cases_have_unique_names():
    names = [c.name for c in all_cases()]
    assert len(names) == len(set(names)) == len(BUILDERS)


def test_chain_margin_masks_negative_F():
    case = BUILDERS["gaussian_line"]()
    cert, params = hk.identities.auto_certify(case.family, case.pot, case.m, case.alpha, case.times, case.points)
    m, _ = hk.identities.chain_margin(case.family, case.pot, case.u, 0.6, case.points, cert, params)
    assert np.all(np.isfinite(m) | np.isnan(m))
