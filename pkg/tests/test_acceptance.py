"""Acceptance criteria at their pinned tolerances; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import sympy as sp

from harnacklab import diffusion as dif
from harnacklab import geometry as geo
from harnacklab import harnack as hk
from harnacklab.harnack.testcases import all_cases
from harnacklab.heat import NODES, derive_fields, make_grid1d, sample_analytic, solve_heat
from harnacklab.runner import run_scenario
from harnacklab.scenario import build_scenario, load_config
from harnacklab.symbolic import T, chart_symbols


def _line(capsys, n, name, passed, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {name}: {'PASS' if passed else 'FAIL'} | {detail}")


def _run(name, checks, **edits):
    tree = load_config(name)
    tree["checks"] = checks
    for key, val in edits.items():
        tree[key].update(val)
    doc, _, _ = run_scenario(build_scenario(tree))
    return {c["label"]: c for c in doc["checks"]}, doc


# 1 -------------------------------------------------------------------------


def test_1_gaussian_sharpness(capsys):
    t0 = time.perf_counter()
    fam = geo.static_flat(geo.Chart.line(-8.0, 8.0))
    pot = geo.PotentialFamily.zero(fam)
    grid = make_grid1d(fam, 2001, NODES)
    u0 = np.exp(-grid.x**2 / 0.4) / math.sqrt(0.4 * math.pi)
    f = solve_heat(u0, fam, pot, (0.1, 1.0), "crank_nicolson", n_steps=1800, grid=grid, t_origin=0.0)
    d = derive_fields(f)
    tau = d.tau[:, None]
    window = np.abs(grid.x)[None, :] <= 2 * np.sqrt(2 * tau)
    rel_num = np.max(np.abs(2 * tau * d.li_yau_quantity(1.0) - 1)[window & d.valid()])
    (x0,) = chart_symbols(1)
    exact = sample_analytic(sp.exp(-(x0**2) / (4 * T)) / sp.sqrt(4 * sp.pi * T), fam, pot, f.times, grid)
    da = derive_fields(exact)
    rel_an = np.max(np.abs(2 * da.tau[:, None] * da.li_yau_quantity(1.0) - 1))
    elapsed = time.perf_counter() - t0
    ok = rel_num < 1e-3 and rel_an < 1e-10 and elapsed < 10
    _line(capsys, 1, "gaussian_sharpness", ok,
          f"numeric rel err {rel_num:.2e} (<1e-3, 2-sigma window), analytic {rel_an:.2e} (<1e-10), {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------


def test_2_identity_residuals(capsys):
    t0 = time.perf_counter()
    results = [r for case in all_cases() for r in hk.run_identity_case(case)]
    elapsed = time.perf_counter() - t0
    wanted = ("bochner", "commutator", "evolution_identity", "li_yau_chain")
    picked = [r for r in results if r.identity_id.split("[")[0] in wanted]
    failed = [r.identity_id for r in results if not r.passed]
    orders = [r.order for r in picked if r.kind == "equality" and math.isfinite(r.order) and r.values[-1] > 1e-8]
    ok = not failed and elapsed < 30 and {r.identity_id.split("[")[0] for r in picked} == set(wanted)
    _line(capsys, 2, "identity_residuals", ok,
          f"{len(results)} suites, {len(failed)} failed, min order {min(orders):.3f} (>=1.9 or round-off), "
          f"{elapsed:.1f}s")
    assert ok, failed


# 3 -------------------------------------------------------------------------


def test_3_psi_contract(capsys):
    Ks = [0.0, 1e-8, 1.0, 10.0]
    ts = np.linspace(1e-3, 10.0, 2000)
    ode = max(float(np.max(np.abs(hk.psi_derivative(ts, K) + 2 * K * hk.psi_factor(ts, K) - 1.0))) for K in Ks)
    elem = hk.elementary_inequality_report(Ks, ts, 0.0)
    ok = ode < 1e-12 and elem.passed
    _line(capsys, 3, "psi_contract", ok, f"max ODE residual {ode:.2e} (<1e-12), elementary bound min margin "
          f"{elem.worst_margin:.2e} (>=0)")
    assert ok


# 4 -------------------------------------------------------------------------

_HAMILTON = ["flow_certificate", "hamilton_1_13", "hamilton_1_14"]


def test_4_hamilton_three_scenarios(capsys):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("circle_cosine", "ou_line", "ricci_flow_s2"):
        checks, _ = _run(name, _HAMILTON)
        cert = checks["flow_certificate"]
        good = cert["worst_margin"] >= -1e-10 and all(checks[c]["passed"] for c in _HAMILTON[1:])
        ok &= good
        parts.append(f"{name}: cert {cert['worst_margin']:.1e}, 1.13 {checks['hamilton_1_13']['worst_margin']:.2e}, "
                     f"1.14 {checks['hamilton_1_14']['worst_margin']:.2e} (tol {checks['hamilton_1_13']['tolerance']:.1e})")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    _line(capsys, 4, "hamilton", ok, "; ".join(parts) + f"; {elapsed:.1f}s")
    assert ok


# 5 -------------------------------------------------------------------------


def test_5_li_yau_compact_s2(capsys):
    checks, doc = _run("ricci_flow_s2", [{"id": "li_yau_compact", "tolerance": 1e-4}, "bianchi_defect"])
    ly = checks["li_yau_compact"]
    B = doc["certificates"]["variant_alpha"]["B_const"]
    ok = ly["passed"] and ly["worst_margin"] >= -1e-4 and B < 1e-6
    _line(capsys, 5, "li_yau_compact_s2", ok,
          f"min margin {ly['worst_margin']:.3e} (>=-1e-4), B_const {B:.1e} (<1e-6), D {ly['detail']['values']['D']:.3f}")
    assert ok


# 6 -------------------------------------------------------------------------


def test_6_static_reduction(capsys):
    worst = 0.0
    for t in (0.05, 0.3, 1.0, 4.0):
        for K in (0.1, 1.0, 5.0):
            for alpha in (1.5, 2.0, 3.0):
                for C4 in (0.0, 3.0, 24.0):
                    m = 3.0
                    gamma = hk.matching_gamma(t, alpha, C4, K)
                    D = m * (2 * K + gamma) ** 2 / (alpha - 1) ** 2
                    full = float(hk.li_yau_bound(t, m, alpha, D, C4 * math.sqrt(K)))
                    red = float(hk.static_reduction(t, m, alpha, C4, K))
                    worst = max(worst, abs(full - red) / red)
    ok = worst < 1e-12
    _line(capsys, 6, "static_reduction", ok, f"max relative difference {worst:.2e} (<1e-12) at matching gamma")
    assert ok


# 7 -------------------------------------------------------------------------


def test_7_corollaries(capsys):
    checks, _ = _run("circle_cosine", [{"id": "integrated_harnack", "n_pairs": 50, "tolerance": 1e-6},
                                       {"id": "parabolic_harnack", "n_pairs": 50, "tolerance": 1e-6}])
    s2, _ = _run("ricci_flow_s2", [{"id": "parabolic_harnack", "n_pairs": 50, "tolerance": 1e-6}])
    ih, ph, ph2 = checks["integrated_harnack"], checks["parabolic_harnack"], s2["parabolic_harnack"]
    ok = ih["passed"] and ph["passed"] and ph2["passed"]
    _line(capsys, 7, "corollaries", ok,
          f"integrated (circle, 50 pairs) {ih['worst_margin']:.3e}; parabolic circle {ph['worst_margin']:.3e}, "
          f"S2 {ph2['worst_margin']:.3e} (>=-1e-6, C7 {ph2['detail']['values']['C7']:.3f})")
    assert ok


# 8 -------------------------------------------------------------------------


def test_8_monte_carlo(capsys):
    t0 = time.perf_counter()
    circ, _ = _run("circle_cosine", ["feynman_kac", "martingale_inequality"])
    ou, _ = _run("ou_line", ["feynman_kac"])
    elapsed = time.perf_counter() - t0
    fam = geo.static_flat(geo.Chart.circle())
    pot = geo.PotentialFamily.zero(fam)
    kw = dict(n_paths=20000, ds=0.02, seed=11)
    a = dif.simulate(fam, pot, 1.0, (0.0, 1.0), threads=1, **kw)
    b = dif.simulate(fam, pot, 1.0, (0.0, 1.0), threads=4, **kw)
    bitwise = np.array_equal(a.terminal, b.terminal)
    fk_c, fk_o, mg = circ["feynman_kac"], ou["feynman_kac"], circ["martingale_inequality"]
    ok = fk_c["passed"] and fk_o["passed"] and mg["passed"] and bitwise and elapsed < 60
    _line(capsys, 8, "monte_carlo", ok,
          f"FK circle {fk_c['worst_margin']:.2e} (bound {fk_c['tolerance']:.2e}), FK OU {fk_o['worst_margin']:.2e} "
          f"(bound {fk_o['tolerance']:.2e}), martingale {mg['worst_margin']:.2e} (>= -{mg['tolerance']:.2e}), "
          f"bitwise {bitwise}, {elapsed:.1f}s for 2x1e5 paths")
    assert ok


# 9 -------------------------------------------------------------------------


def test_9_perelman_mass(capsys):
    checks, doc = _run("perelman_mass", [{"id": "mass_conservation", "tolerance": 1e-8}])
    m = checks["mass_conservation"]
    ok = m["passed"] and doc["config"]["grid"]["scheme"] == "implicit_euler"
    _line(capsys, 9, "perelman_mass", ok, f"max relative drift per step {-m['worst_margin']:.2e} (<1e-8), implicit Euler")
    assert ok
