"""Scenario pipeline: certify, solve, derive, check, optionally simulate, report.

:func:`run_scenario` returns the report document and the margin reports;
:func:`write_run` lays them out in a run directory.  The report is
deterministic for a fixed config and seed except for ``generated_at``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import re
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from . import diffusion as dif
from . import harnack as hk
from .errors import ConfigError, HarnackLabError
from .flowcheck import ConditionKind, certify_flow, make_grid, wire_cutoff_constants
from .geometry import LINE, SPHERE, cutoff_eta
from .harnack.margins import _report
from .harnack.report import HarnackReport, _plain
from .harnack.testcases import BUILDERS
from .heat import (
    derive_fields,
    fundamental_solution,
    growth_condition_spot_check,
    make_grid1d,
    sample_analytic,
    solve_heat,
)
from .scenario import SCHEMA_VERSION
from .symbolic import T, chart_symbols

REPORT_SCHEMA_VERSION = 1

# checks whose default source is the solved field when one exists
_FIELD_IDENTITIES = ("evolution_identity", "evolution_sign", "li_yau_chain")
_SYMBOLIC_IDS = (
    "heat_equation", "bochner", "gradient_rate", "commutator", "evolution_identity", "companion_identity",
    "evolution_sign", "max_principle_function", "li_yau_F_identity", "li_yau_F_lower_bound", "li_yau_chain",
)


def json_safe(v):
    """Recursively replace non-finite floats by strings so the JSON stays standard."""
    v = _plain(v)
    if isinstance(v, float):
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, dict):
        return {str(k): json_safe(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [json_safe(w) for w in v]
    return v


class Context:
    """Lazily built run state shared by the check handlers."""

    def __init__(self, scen, threads=1):
        self.scen = scen
        self.threads = int(threads)
        self._field = None
        self._derived = None
        self._certs = {}
        self._cache = {}

    # -- tolerances and rngs --------------------------------------------------

    def tol(self, spec, default):
        base = spec.get("tolerance", default)
        return float(base) * self.scen.tolerance_scale

    def rng(self, label):
        # stable per-check stream: seed and the label's bytes
        key = [self.scen.seed] + list(label.encode("utf-8"))
        return np.random.Generator(np.random.Philox(key))

    # -- field ------------------------------------------------------------------

    @property
    def has_field(self):
        return self.scen.initial is not None

    @property
    def field(self):
        if self._field is None:
            if not self.has_field:
                raise ConfigError("this check needs a solved field; add an 'initial' section")
            self._field = self._solve()
        return self._field

    def _solve(self):
        s = self.scen
        g = s.grid
        grid = make_grid1d(s.family, g.n_x, g.layout)
        (x0,) = chart_symbols(1)
        t0, t1 = g.t_range
        t_origin = t0 if g.t_origin is None else g.t_origin
        if "analytic" in s.initial:
            dims = chart_symbols(s.family.dim)
            expr = sp.sympify(s.initial["analytic"], locals={"x0": dims[0], "t": T})
            times = np.linspace(t0, t1, g.n_steps // g.store_every + 1)
            return sample_analytic(expr, s.family, s.pot, times, grid, t_origin, "analytic")
        expr = sp.sympify(s.initial["expr"], locals={"x0": x0})
        if expr.free_symbols - {x0}:
            raise ConfigError("field 'initial.expr' may only depend on x0")
        fn = sp.lambdify(x0, expr, "numpy")
        u0 = np.broadcast_to(np.asarray(fn(grid.x), float), grid.x.shape).copy()
        return solve_heat(
            u0, s.family, s.pot, g.t_range, g.scheme, n_steps=g.n_steps, grid=grid, store_every=g.store_every,
            flux_tol=g.flux_tol, t_origin=t_origin,
        )

    def derived(self):
        if self._derived is None:
            self._derived = derive_fields(self.field, (1.0, float(self.scen.flow.alpha)))
        return self._derived

    @property
    def t_min(self):
        return self.scen.grid.t_min if self.scen.grid is not None else 0.05

    # -- certificates -----------------------------------------------------------

    def cert_times(self):
        c = self.scen.certificate
        g = self.scen.grid
        if "times" in c:
            return np.asarray(c["times"], float)
        if g is None:
            raise ConfigError("certificate needs 'certificate.times' when there is no grid")
        return np.linspace(g.t_range[0], g.t_range[1], int(c.get("n_times", 5)))

    def cert(self, kind):
        kind = ConditionKind(kind)
        if kind not in self._certs:
            s = self.scen
            c = s.certificate
            grid = make_grid(s.family, self.cert_times(), int(c.get("n_per_axis", 32)))
            thr = c.get("threshold")
            if thr is None and kind is not ConditionKind.VARIANT_ALPHA:
                thr = 0.0 - s.flow.K  # (-K)-super Perelman: the condition the gradient estimate uses
            self._certs[kind] = certify_flow(
                s.family, s.pot, s.flow, kind, grid, tolerance=float(c.get("tolerance", 1e-10)),
                threshold=None if thr is None else float(thr),
            )
        return self._certs[kind]

    def gradient_cert(self):
        kind = self.scen.certificate.get("kind", "super_perelman")
        if kind == ConditionKind.VARIANT_ALPHA.value:
            kind = ConditionKind.SUPER_PERELMAN
        return self.cert(kind)

    def cutoff(self):
        if "cutoff" not in self._cache:
            self._cache["cutoff"] = cutoff_eta()
        return self._cache["cutoff"]

    def bundle(self, spec):
        prof = self.cutoff()
        m = self.scen.flow.m
        return wire_cutoff_constants(prof.C1, prof.C2, m, self.scen.flow.alpha,
                                     bool(spec.get("include_proof_term", False)))

    def ensemble(self):
        if "ensemble" not in self._cache:
            s = self.scen
            mc = s.mc
            if "x0" not in mc:
                raise ConfigError("missing required field 'mc.x0'")
            params = dif.EnsembleParams(
                n_paths=int(mc.get("n_paths", 100_000)),
                ds=float(mc.get("ds", 1e-2)),
                seed=s.seed,
                threads=self.threads,
                antithetic=bool(mc.get("antithetic", False)),
                record_every=int(mc.get("record_every", 0)),
            )
            f = self.field
            self._cache["ensemble"] = dif.simulate(s.family, s.pot, float(mc["x0"]),
                                                   (float(f.times[0]), float(f.times[-1])), params)
        return self._cache["ensemble"]


# ---------------------------------------------------------------------------
# result records
# ---------------------------------------------------------------------------


def _record(label, check_id, passed, worst, tolerance, detail, informational=False):
    return {
        "label": label,
        "check_id": check_id,
        "passed": bool(passed),
        "informational": bool(informational),
        "worst_margin": worst,
        "tolerance": tolerance,
        "detail": detail,
    }


def _from_report(label, rep, informational=False):
    return _record(label, rep.inequality_id, rep.passed, rep.worst_margin, rep.tolerance, rep.to_dict(),
                   informational)


def _from_residual(label, res):
    vals = np.asarray(res.values, float)
    # equalities: the finest-step residual; inequalities: the worst margin
    worst = -abs(float(vals[-1])) if res.kind == "equality" else float(np.nanmin(vals))
    rec = _record(label, res.identity_id, res.passed, worst, res.tolerance, res.to_dict())
    if math.isfinite(res.order):
        rec["order"] = float(res.order)
    return rec


def _abs_report(check_id, field, mask, signed, tolerance, **kw):
    """Two-sided check: the reported margin is ``−|signed|``."""
    tt = np.broadcast_to(field.times[:, None], mask.shape)[mask]
    xx = np.broadcast_to(field.x[None, :], mask.shape)[mask]
    rep = HarnackReport.from_margins(check_id, -np.abs(signed[mask]), np.stack([tt, xx], -1), tolerance, **kw)
    rep.samples = {"t": tt, "x": xx, "margin": signed[mask]}
    return rep


# ---------------------------------------------------------------------------
# handlers: each returns (records, margin reports)
# ---------------------------------------------------------------------------


def _flow_certificate(ctx, spec):
    kind = spec.get("kind", ctx.scen.certificate.get("kind", "super_perelman"))
    cert = ctx.cert(kind)
    return [_record(spec["label"], "flow_certificate", cert.passed, cert.min_margin, cert.tolerance,
                    cert.to_dict())], []


def _bianchi(ctx, spec):
    cert = ctx.cert(spec.get("kind", ConditionKind.VARIANT_ALPHA))
    tol = ctx.tol(spec, 1e-6)
    return [_record(spec["label"], "bianchi_defect", cert.B_const <= tol, -cert.B_const, tol,
                    {"B_const": cert.B_const, "cert": cert.to_dict()})], []


def _hamilton(ctx, spec):
    key = ("hamilton", spec.get("sup_bound"), spec.get("t_min"), spec.get("tolerance"))
    if key not in ctx._cache:
        f = ctx.field
        tol = ctx.tol(spec, hk.discretisation_tolerance(f))
        ctx._cache[key] = hk.hamilton_margin(
            f, ctx.scen.flow.K, ctx.gradient_cert(), t_min=float(spec.get("t_min", ctx.t_min)), tolerance=tol,
            sup_bound=spec.get("sup_bound"), derived=ctx.derived(),
        )
    rep = ctx._cache[key][0 if spec["id"] == "hamilton_1_13" else 1]
    return [_from_report(spec["label"], rep)], [rep]


def _integrated(ctx, spec):
    f = ctx.field
    pairs = hk.random_node_pairs(f, int(spec.get("n_pairs", 50)), ctx.rng(spec["label"]))
    delta = float(spec.get("delta", ctx.scen.flow.delta))
    rep = hk.integrated_harnack_margin(
        f, ctx.scen.flow.K, delta, pairs, ctx.gradient_cert(), t_min=float(spec.get("t_min", ctx.t_min)),
        tolerance=ctx.tol(spec, hk.discretisation_tolerance(f)), sup_bound=spec.get("sup_bound"),
    )
    return [_from_report(spec["label"], rep)], [rep]


def _li_yau(ctx, spec):
    f = ctx.field
    case = spec["id"][len("li_yau_"):]
    bundle = ctx.bundle(spec) if case != "compact" else None
    rep = hk.li_yau_margin(
        f, ctx.cert(ConditionKind.VARIANT_ALPHA), ctx.scen.flow, case, R=spec.get("R"),
        base_point=spec.get("base_point"), bundle=bundle, t_min=float(spec.get("t_min", ctx.t_min)),
        tolerance=ctx.tol(spec, hk.discretisation_tolerance(f)), D_variant=spec.get("D_variant"),
        derived=ctx.derived(),
    )
    return [_from_report(spec["label"], rep)], [rep]


def _li_yau_sharpness(ctx, spec):
    """Equality case of the Li-Yau bound with alpha = 1 on flat space: ``τ(|∇f|² − ∂ₜf) = m/2``."""
    f = ctx.field
    if spec.get("source", "field") == "analytic":
        if "solution" not in spec:
            raise ConfigError(f"field 'checks.{spec['label']}.solution' is required for source: analytic")
        (x0,) = chart_symbols(1)
        expr = sp.sympify(spec["solution"], locals={"x0": x0, "t": T})
        f = sample_analytic(expr, f.family, f.pot, f.times, f.grid, f.t_origin, "analytic")
        d = derive_fields(f)
        default_tol = hk.discretisation_tolerance(f)
    else:
        d = ctx.derived()
        default_tol = 1e-3
    m = float(spec.get("m", ctx.scen.flow.m))
    tau = d.tau[:, None]
    rel = 1.0 - 2.0 * tau * d.li_yau_quantity(1.0) / m
    sigma = np.sqrt(2.0 * np.maximum(tau, 0.0))
    centre = float(spec.get("center", 0.0))
    window = np.abs(f.x[None, :] - centre) <= float(spec.get("window_sigma", 2.0)) * sigma
    mask = d.valid() & window & (tau > float(spec.get("t_min", 0.0))) & np.isfinite(rel)
    tol = ctx.tol(spec, default_tol)
    rep = _abs_report("li_yau_sharpness", f, mask, rel, tol,
                      params_used={"m": m, "window_sigma": float(spec.get("window_sigma", 2.0))},
                      notes=["margin is 1 - 2 tau (|grad f|^2 - f_t)/m; the bound is attained by the heat kernel"],
                      values={"max_abs_margin": float(np.max(np.abs(rel[mask])))})
    return [_from_report(spec["label"], rep)], [rep]


def _parabolic(ctx, spec):
    f = ctx.field
    t_min = float(spec.get("t_min", ctx.t_min))
    pairs = hk.random_space_time_pairs(f, int(spec.get("n_pairs", 50)), ctx.rng(spec["label"]), t_min)
    case = spec.get("case", "compact")
    rep = hk.parabolic_harnack_margin(
        f, ctx.cert(ConditionKind.VARIANT_ALPHA), ctx.scen.flow, pairs, C=spec.get("C"),
        t_ref=float(spec.get("t_ref", f.times[0])), case=case, R=spec.get("R"),
        bundle=ctx.bundle(spec) if case != "compact" else None,
        tolerance=ctx.tol(spec, hk.discretisation_tolerance(f)), D_variant=spec.get("D_variant"),
    )
    return [_from_report(spec["label"], rep)], [rep]


def _static_reduction(ctx, spec):
    flow = ctx.scen.flow
    K = float(spec.get("K", flow.K if flow.K > 0 else 1.0))
    m = float(spec.get("m", flow.m if math.isfinite(flow.m) else 3.0))
    alpha = float(spec.get("alpha", flow.alpha))
    C4 = float(spec.get("C4", wire_cutoff_constants(ctx.cutoff().C1, ctx.cutoff().C2, m).C4))
    ts = np.asarray(spec.get("times", [0.1, 0.5, 1.0, 2.0, 5.0]), float)
    rel = []
    for t in ts:
        gamma = hk.matching_gamma(float(t), alpha, C4, K)
        D = m * (2 * K + gamma) ** 2 / (alpha - 1) ** 2
        full = float(hk.li_yau_bound(t, m, alpha, D, C4 * math.sqrt(K)))
        red = float(hk.static_reduction(t, m, alpha, C4, K))
        rel.append((full - red) / red)
    rel = np.asarray(rel)
    tol = ctx.tol(spec, 1e-12)
    rep = HarnackReport.from_margins("static_reduction", -np.abs(rel), ts[:, None], tol,
                                     params_used={"K": K, "m": m, "alpha": alpha, "C4": C4},
                                     notes=["margin is -|relative difference| at the matching gamma"])
    return [_from_report(spec["label"], rep)], []


def _psi_ode(ctx, spec):
    Ks = spec.get("K_values", [0.0, 1e-8, 1.0, 10.0])
    ts = np.asarray(spec.get("t_values", np.linspace(0.01, 5.0, 200)), float)
    worst = 0.0
    for K in Ks:
        r = hk.psi_derivative(ts, float(K)) + 2 * float(K) * hk.psi_factor(ts, float(K)) - 1.0
        worst = max(worst, float(np.max(np.abs(r))))
    tol = ctx.tol(spec, 1e-12)
    return [_record(spec["label"], "psi_factor_ode", worst <= tol, -worst, tol, {"K_values": Ks})], []


def _psi_bound(ctx, spec):
    Ks = spec.get("K_values", [0.0, 1e-8, 1.0, 10.0])
    ts = np.asarray(spec.get("t_values", np.linspace(0.01, 5.0, 200)), float)
    rep = hk.elementary_inequality_report(Ks, ts, ctx.tol(spec, 0.0))
    return [_from_report(spec["label"], rep)], []


def _algebraic(ctx, spec):
    rep = hk.algebraic_lemma_report(ctx.rng(spec["label"]), int(spec.get("n_samples", 10000)),
                                    ctx.tol(spec, 1e-12))
    return [_from_report(spec["label"], rep)], []


def _comparison(ctx, spec):
    s = ctx.scen
    key = ("comparison", repr(sorted((k, repr(v)) for k, v in spec.items() if k not in ("id", "label"))))
    if key not in ctx._cache:
        cert = ctx.cert(ConditionKind.VARIANT_ALPHA)
        chart = s.family.chart
        if "base_point" in spec:
            o = np.asarray(spec["base_point"], float)
        elif chart.kind == SPHERE:
            o = np.full(chart.dim, 1.0)
        else:
            o = np.zeros(chart.dim) if chart.kind != LINE else np.array([0.5 * sum(chart.interval)])
        times = np.asarray(spec.get("times", ctx.cert_times()[:3]), float)
        pts = make_grid(s.family, times, int(spec.get("n_per_axis", 24))).points
        ctx._cache[key] = hk.laplacian_comparison_margin(
            s.family, s.pot, s.flow.m, cert.K1, cert.K2, o, pts, times, R=float(spec.get("R", 1.0)),
            cutoff=ctx.cutoff(), tolerance=ctx.tol(spec, 1e-6),
        )
    reps = dict(zip(("laplacian_comparison", "laplacian_comparison_rho_form", "cutoff_inequality"),
                    ctx._cache[key]))
    rep = reps[spec["id"]]
    return [_from_report(spec["label"], rep, hk.CATALOG[spec["id"]].informational)], []


def _cutoff_profile(ctx, spec):
    prof = ctx.cutoff()
    res = prof.verify()
    ok = all(res.values())
    return [_record(spec["label"], "cutoff_profile", ok, 0.0 if ok else -1.0, 0.0,
                    {"C1": prof.C1, "C2": prof.C2, "properties": res})], []


def _mass(ctx, spec):
    f = ctx.field
    masses = np.array([f.mass(k) for k in range(f.n_t)])
    steps = f.meta.get("store_every", 1)
    drift = np.abs(np.diff(masses)) / abs(masses[0]) / steps
    worst = float(np.max(drift)) if drift.size else 0.0
    tol = ctx.tol(spec, 1e-8)
    return [_record(spec["label"], "mass_conservation", worst <= tol, -worst, tol,
                    {"max_drift_per_step": worst, "mass_first": masses[0], "mass_last": masses[-1],
                     "total_relative_drift": float(abs(masses[-1] - masses[0]) / abs(masses[0]))})], []


def _growth(ctx, spec):
    f = ctx.field
    g = ctx.scen.grid
    x0 = float(spec.get("source", f.x[len(f.x) // 2]))
    kernel = fundamental_solution(
        f.family, f.pot, x0, (float(f.times[0]), float(f.times[-1])), float(spec.get("sigma0", 4 * f.grid.dx)),
        grid=f.grid, scheme=g.scheme, n_steps=g.n_steps, store_every=g.store_every, flux_tol=math.inf,
    )
    res = growth_condition_spot_check(f, kernel)
    return [_record(spec["label"], "growth_condition", res["finite"], 0.0 if res["finite"] else -math.inf, 0.0,
                    res, informational=True)], []


def _field_evolution(ctx, spec):
    f = ctx.field
    d = ctx.derived()
    resid, sign, scale = hk.field_evolution_residual(f, ctx.scen.flow.K, d)
    t_min = float(spec.get("t_min", ctx.t_min))
    mask = np.isfinite(resid) & (d.tau[:, None] > t_min)
    mask[[0, -1], :] = False
    norm = 1.0 + float(np.nanmax(np.where(mask, scale, np.nan)))
    tol = ctx.tol(spec, hk.discretisation_tolerance(f) * norm)
    if spec["id"] == "evolution_identity":
        rep = _abs_report("evolution_identity", f, mask, resid, tol,
                          notes=["discrete operator and centred time differences; margin is -|residual|"],
                          values={"scale": norm})
    else:
        rep = _report("evolution_sign", f, mask, sign, tol, values={"scale": norm})
    return [_from_report(spec["label"], rep)], [rep]


def _field_chain(ctx, spec):
    f = ctx.field
    t_min = float(spec.get("t_min", ctx.t_min))
    margin, scale = hk.field_chain_margin(f, ctx.cert(ConditionKind.VARIANT_ALPHA), ctx.scen.flow,
                                          ctx.derived(), t_min)
    mask = np.isfinite(margin)
    norm = 1.0 + float(np.max(scale[mask]))
    tol = ctx.tol(spec, hk.discretisation_tolerance(f) * norm)
    rep = _report("li_yau_chain", f, mask, margin, tol, values={"scale": norm},
                  notes=["restricted to nodes with F >= 0"])
    return [_from_report(spec["label"], rep)], [rep]


def _symbolic(ctx, spec):
    names = spec.get("cases", list(BUILDERS))
    unknown = [n for n in names if n not in BUILDERS]
    if unknown:
        raise ConfigError(f"field 'checks.{spec['label']}.cases': unknown cases {unknown}")
    tol = ctx.tol(spec, 1e-8)
    out = []
    for name in names:
        key = ("symbolic", name, tol)
        if key not in ctx._cache:
            ctx._cache[key] = hk.run_identity_case(BUILDERS[name](), tolerance=tol)
        for res in ctx._cache[key]:
            if res.identity_id.split("[")[0] == spec["id"]:
                out.append(_from_residual(f"{spec['label']}[{name}]", res))
    if not out:
        raise ConfigError(f"check {spec['label']}: no selected case provides {spec['id']}")
    return out, []


def _identity(ctx, spec):
    source = spec.get("source")
    if source is None:
        source = "field" if spec["id"] in _FIELD_IDENTITIES and ctx.has_field else "symbolic"
    if source == "field":
        if spec["id"] == "li_yau_chain":
            return _field_chain(ctx, spec)
        return _field_evolution(ctx, spec)
    return _symbolic(ctx, spec)


def _mc_record(ctx, label, res, inequality=False):
    bound = res["bound"] * ctx.scen.tolerance_scale
    passed = res["value"] >= -bound if inequality else abs(res["value"]) <= bound
    return _record(label, res["check_id"], passed, res["value"], bound, res)


def _feynman_kac(ctx, spec):
    res = dif.feynman_kac_check(ctx.ensemble(), ctx.field)
    return [_mc_record(ctx, spec["label"], res)], []


def _martingale(ctx, spec):
    res = dif.martingale_inequality_check(ctx.ensemble(), ctx.field, ctx.scen.flow.K, spec.get("sup_bound"),
                                          float(spec.get("t_min", ctx.t_min)))
    return [_mc_record(ctx, spec["label"], res, inequality=True)], []


def _generator(ctx, spec):
    s = ctx.scen
    f = ctx.field
    (x0,) = chart_symbols(1)
    fn = sp.lambdify(x0, sp.sympify(spec.get("fn", "cos(x0)"), locals={"x0": x0}), "numpy")
    vfn = lambda x: np.broadcast_to(np.asarray(fn(x), float), np.shape(x)).copy()  # noqa: E731
    params = dif.EnsembleParams(n_paths=int(spec.get("n_paths", s.mc.get("n_paths", 100_000))),
                                ds=float(spec.get("ds", 1e-3)), seed=s.seed, threads=ctx.threads)
    t = float(spec.get("t", f.times[-1]))
    x_start = float(spec.get("x0", s.mc.get("x0", f.x[len(f.x) // 2])))
    res = dif.generator_consistency_check(s.family, s.pot, vfn, x_start, t, f.grid, params)
    return [_mc_record(ctx, spec["label"], res)], []


HANDLERS = {
    "flow_certificate": _flow_certificate,
    "bianchi_defect": _bianchi,
    "hamilton_1_13": _hamilton,
    "hamilton_1_14": _hamilton,
    "integrated_harnack": _integrated,
    "li_yau_compact": _li_yau,
    "li_yau_complete": _li_yau,
    "li_yau_local": _li_yau,
    "li_yau_sharpness": _li_yau_sharpness,
    "parabolic_harnack": _parabolic,
    "static_reduction": _static_reduction,
    "psi_factor_ode": _psi_ode,
    "psi_elementary_bound": _psi_bound,
    "algebraic_lemma": _algebraic,
    "laplacian_comparison": _comparison,
    "laplacian_comparison_rho_form": _comparison,
    "cutoff_inequality": _comparison,
    "cutoff_profile": _cutoff_profile,
    "mass_conservation": _mass,
    "growth_condition": _growth,
    "feynman_kac": _feynman_kac,
    "martingale_inequality": _martingale,
    "generator_consistency": _generator,
}
HANDLERS.update({cid: _identity for cid in _SYMBOLIC_IDS})


def validate_checks(scen):
    for c in scen.checks:
        if c["id"] not in HANDLERS:
            raise ConfigError(f"field 'checks': unknown check id {c['id']!r} (see 'harnacklab describe')")


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def run_scenario(scen, threads=1, timestamp=None):
    """Run every configured check; returns ``(report_dict, [(label, report)], context)``.

    A check that raises a library error is recorded as failed with the
    message; the remaining checks still run.
    """
    validate_checks(scen)
    ctx = Context(scen, threads)
    records, reports = [], []
    for spec in scen.checks:
        try:
            recs, reps = HANDLERS[spec["id"]](ctx, spec)
        except ConfigError:
            raise
        except HarnackLabError as exc:
            recs, reps = [_record(spec["label"], spec["id"], False, None, None,
                                  {"error": f"{type(exc).__name__}: {exc}"})], []
        info = hk.CATALOG.get(spec["id"])
        for r in recs:
            r["informational"] = r["informational"] or bool(spec.get("informational", False)) or \
                bool(info is not None and info.informational)
        records.extend(recs)
        reports.extend((spec["label"], rep) for rep in reps)
    failed = [r["label"] for r in records if not r["passed"] and not r["informational"]]
    doc = {
        "report_schema_version": REPORT_SCHEMA_VERSION,
        "config_schema_version": SCHEMA_VERSION,
        "harnacklab_version": __version__,
        "scenario": scen.name,
        "description": scen.description,
        "generated_at": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": scen.seed,
        "tolerance_scale": scen.tolerance_scale,
        "config": scen.tree,
        "flow": scen.flow.to_dict(),
        "field": _field_summary(ctx),
        "certificates": {k.value: c.to_dict() for k, c in sorted(ctx._certs.items(), key=lambda kv: kv[0].value)},
        "checks": records,
        "summary": {
            "passed": not failed,
            "n_checks": len(records),
            "n_failed": len(failed),
            "failed": failed,
            "n_informational": sum(r["informational"] for r in records),
        },
    }
    if "ensemble" in ctx._cache:
        doc["ensemble"] = ctx._cache["ensemble"].summary()
    return json_safe(doc), reports, ctx


def _field_summary(ctx):
    f = ctx._field
    if f is None:
        return None
    return {
        "n_t": int(f.n_t),
        "t_range": [float(f.times[0]), float(f.times[-1])],
        "t_origin": float(f.t_origin),
        "scheme": f.scheme,
        "dt": float(f.dt),
        "grid": f.grid.to_dict(),
        "sup_u": float(np.max(f.u)),
        "inf_u": float(np.min(f.u)),
        "meta": f.meta,
    }


def _safe_name(label):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def write_run(run_dir, doc, reports, ctx):
    """Write ``report.json``, ``checks.csv``, per-check margin CSVs and the field dump."""
    run_dir = Path(run_dir)
    (run_dir / "margins").mkdir(parents=True, exist_ok=True)
    with open(run_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(run_dir / "checks.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "check_id", "passed", "informational", "worst_margin", "tolerance"])
        for r in doc["checks"]:
            w.writerow([r["label"], r["check_id"], r["passed"], r["informational"],
                        "" if r["worst_margin"] is None else repr(r["worst_margin"]),
                        "" if r["tolerance"] is None else repr(r["tolerance"])])
    for label, rep in reports:
        if rep.samples:
            hk.write_margin_csv([rep], run_dir / "margins" / f"{_safe_name(label)}.csv")
    if ctx._field is not None:
        ctx._field.to_binary(run_dir / "field.bin")
    if "ensemble" in ctx._cache:
        ctx._cache["ensemble"].dump_terminal_csv(run_dir / "terminal.csv")
    return run_dir
