"""Signed margins of the Harnack inequalities on solved fields.

Every margin is ``RHS − LHS`` in the inequality's own units, so a check
passes when its worst margin is at least ``−tolerance``.  Checks that rely
on a curvature condition refuse to run without a passed certificate of the
right kind.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import CertificateError, ParameterError
from ..flowcheck import ConditionKind, GridSpec, metric_equivalence_constant
from ..geometry import CIRCLE, LINE, SPHERE, TORUS, cutoff_eta, distance, distance_rate, is_infinite_dim
from ..heat import derive_fields
from .bounds import (
    c7_constants,
    elementary_inequality_report,
    hamilton_coefficient,
    li_yau_bound,
    li_yau_constants,
    sqrtk_coth,
)
from .fd import Calculus, fd_second_partials, fd_partials, stencil_points
from .report import HarnackReport

PARABOLIC_DIRECTION_NOTE = (
    "checked in the lower-bound form u(x2,t2)/u(x1,t1) >= exp(-C7 dt)(t1/t2)^(m alpha/2)"
    " exp(-C alpha d^2/(4 dt)); the displayed upper-bound direction is not what the path argument yields"
)


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def discretisation_tolerance(field, c=10.0, floor=1e-9):
    """``c·(Δx² + Δt) + floor``; closed-form fields get ``floor`` alone."""
    if field.analytic is not None:
        return floor
    dt = field.dt if field.dt > 0 else (float(np.min(np.diff(field.times))) if field.n_t > 1 else 0.0)
    return c * (field.grid.dx**2 + dt) + floor


def _require_cert(cert, kinds, K, what):
    if cert is None:
        raise CertificateError(f"{what} needs a passed {kinds[0].value} certificate; none was given")
    kind = ConditionKind(cert.condition_kind)
    if kind not in kinds:
        names = " or ".join(k.value for k in kinds)
        raise CertificateError(f"{what} needs a {names} certificate, got {kind.value}")
    if not cert.passed:
        raise CertificateError(
            f"{what}: certificate failed (min margin {cert.min_margin:.3e} at {cert.argmin})"
        )
    if cert.threshold < -K - 1e-12 * max(1.0, K):
        raise CertificateError(
            f"{what}: certificate threshold {cert.threshold} is weaker than the required -K = {-K}"
        )


def _node_mask(field, derived, t_min, region=None):
    mask = derived.valid() & (derived.tau[:, None] > t_min)
    mask &= field.grid.in_chart()[None, :]
    if region is not None:
        mask &= region
    if not mask.any():
        raise ParameterError("no grid nodes survive the t_min and region masks")
    return mask


def _samples(field, mask, margins):
    tt = np.broadcast_to(field.times[:, None], mask.shape)[mask]
    xx = np.broadcast_to(field.x[None, :], mask.shape)[mask]
    return {"t": tt, "x": xx, "margin": margins[mask]}


def _report(check_id, field, mask, margins, tolerance, **kw):
    s = _samples(field, mask, margins)
    rep = HarnackReport.from_margins(check_id, s["margin"], np.stack([s["t"], s["x"]], axis=-1), tolerance, **kw)
    rep.samples = s
    return rep


def _cert_dict(cert):
    return None if cert is None else cert.to_dict()


# ---------------------------------------------------------------------------
# Hamilton-type gradient estimate
# ---------------------------------------------------------------------------


def hamilton_margin(field, K, cert, *, t_min=0.05, tolerance=None, sup_bound=None, derived=None, region=None):
    """Margins of the ``2K/(1−e^{−2Kτ})`` and ``1/τ + 2K`` gradient bounds.

    Returns ``(report_sharp, report_relaxed)``.  ``sup_bound`` defaults to
    the grid maximum of ``u``.  The relaxed bound follows from the sharp one
    through ``2K/(1−e^{−2Kτ}) ≤ 2K + 1/τ``, which is checked on the same
    τ-levels and recorded in the relaxed report.
    """
    _require_cert(cert, (ConditionKind.SUPER_PERELMAN, ConditionKind.SUPER_PERELMAN_M), K, "hamilton_margin")
    d = derived if derived is not None else derive_fields(field)
    A = field.sup_bound_A if sup_bound is None else float(sup_bound)
    if np.any(field.u > A * (1 + 1e-12)):
        raise ParameterError(f"sup_bound {A} is below max u = {field.sup_bound_A}")
    tol = discretisation_tolerance(field) if tolerance is None else float(tolerance)
    mask = _node_mask(field, d, t_min, region)
    tau = np.maximum(d.tau, t_min)[:, None]
    log_ratio = np.log(A / field.u)
    lhs = d.grad_f_sq
    sharp = hamilton_coefficient(tau, K) * log_ratio - lhs
    relaxed = (1.0 / tau + 2 * K) * log_ratio - lhs
    taus = np.unique(d.tau[d.tau > t_min])
    elem = elementary_inequality_report([K], taus, 0.0)
    common = dict(
        params_used={"K": K, "sup_bound_A": A, "t_min": t_min, "t_origin": field.t_origin},
        cert_ref=_cert_dict(cert),
    )
    r1 = _report("hamilton_1_13", field, mask, sharp, tol, notes=[], values={"sup_bound_A": A}, **common)
    r2 = _report(
        "hamilton_1_14",
        field,
        mask,
        relaxed,
        tol,
        notes=["implied by hamilton_1_13 through 2K/(1-exp(-2Kt)) <= 2K + 1/t"],
        values={"sup_bound_A": A, "elementary_min_margin": elem.worst_margin, "elementary_passed": elem.passed},
        **common,
    )
    return r1, r2


def integrated_harnack_margin(field, K, delta, pairs, cert, *, t_min=0.05, tolerance=None, sup_bound=None,
                              time_indices=None):
    """``log RHS − log u(x, t)`` for the two-point consequence of the gradient bound.

    ``pairs`` is an ``(n, 2)`` array of node indices ``(i, j)`` for ``x`` and
    ``y``; every stored level past ``t_min`` (or ``time_indices``) is used.
    ``delta = inf`` gives the limit ``u ≤ A``.
    """
    _require_cert(cert, (ConditionKind.SUPER_PERELMAN, ConditionKind.SUPER_PERELMAN_M), K,
                  "integrated_harnack_margin")
    if not delta > 0:
        raise ParameterError("delta must be positive")
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    A = field.sup_bound_A if sup_bound is None else float(sup_bound)
    tol = discretisation_tolerance(field) if tolerance is None else float(tolerance)
    tau_all = field.times - field.t_origin
    ks = np.flatnonzero(tau_all > t_min) if time_indices is None else np.asarray(time_indices, int)
    pts_x = field.grid.points(field.x[pairs[:, 0]])
    pts_y = field.grid.points(field.x[pairs[:, 1]])
    if np.isinf(delta):
        w_a, w_u, w_d = 1.0, 0.0, 0.0
    else:
        w_a, w_u = delta / (1 + delta), 1 / (1 + delta)
        w_d = (1 + 1 / delta) / (4 * (1 + delta))
    margins, locs = [], []
    for k in ks:
        t = float(field.times[k])
        dist = np.asarray(distance(field.family, t, pts_x, pts_y), float).reshape(-1)
        ux, uy = field.u[k, pairs[:, 0]], field.u[k, pairs[:, 1]]
        coef = hamilton_coefficient(tau_all[k], K) if w_d else 0.0
        m = w_a * math.log(A) + w_u * np.log(uy) + w_d * coef * dist**2 - np.log(ux)
        margins.append(m)
        locs.append(np.stack([np.full(len(pairs), t), field.x[pairs[:, 0]], field.x[pairs[:, 1]]], axis=-1))
    margins = np.concatenate(margins)
    locs = np.concatenate(locs)
    rep = HarnackReport.from_margins(
        "integrated_harnack",
        margins,
        locs,
        tol,
        params_used={"K": K, "delta": delta, "sup_bound_A": A, "t_min": t_min},
        cert_ref=_cert_dict(cert),
        notes=["location is (t, x, y)"],
        values={"n_pairs": int(len(pairs)), "n_times": int(len(ks))},
    )
    rep.samples = {"t": locs[:, 0], "x": locs[:, 1], "margin": margins}
    return rep


# ---------------------------------------------------------------------------
# Li-Yau
# ---------------------------------------------------------------------------


def li_yau_margin(field, cert, params, case="compact", *, R=None, base_point=None, bundle=None, t_min=0.05,
                  tolerance=None, D_variant=None, derived=None, region=None):
    """``bound(τ) − (|∇f|² − α∂ₜf)`` on every valid node.

    ``case`` is ``compact``, ``complete`` or ``local``; the latter needs
    ``R``, a ``base_point`` (reduced coordinate) and restricts to
    ``d(x, o, t) ≤ 2R``.  ``bundle`` carries the cutoff-wired constants for
    the non-compact cases.
    """
    params.require_li_yau()
    _require_cert(cert, (ConditionKind.VARIANT_ALPHA,), params.K, "li_yau_margin")
    cp = cert.params
    if cp.alpha != params.alpha or cp.m != params.m:
        raise CertificateError("certificate was issued for a different (m, alpha)")
    alpha = float(params.alpha)
    d = derived if derived is not None else derive_fields(field, (alpha,))
    tol = discretisation_tolerance(field) if tolerance is None else float(tolerance)
    D, E = li_yau_constants(cert, params, case, R, bundle, D_variant)
    if case == "local":
        if base_point is None:
            raise ParameterError("the local case needs a base point")
        o = field.grid.points(np.array([float(base_point)]))[0]
        pts = field.grid.points()
        ball = np.stack([np.asarray(distance(field.family, float(t), o, pts), float) <= 2 * R for t in field.times])
        region = ball if region is None else region & ball
    mask = _node_mask(field, d, t_min, region)
    tau = np.maximum(d.tau, t_min)[:, None]
    bound = li_yau_bound(tau, params.m, alpha, D, E)
    margin = bound - d.li_yau_quantity(alpha)
    return _report(
        f"li_yau_{case}",
        field,
        mask,
        margin,
        tol,
        params_used=params.to_dict() | {"case": case, "R": R, "base_point": base_point, "t_min": t_min},
        cert_ref=_cert_dict(cert),
        values={"D": D, "E": E, "bundle": None if bundle is None else bundle.to_dict()},
    )


# ---------------------------------------------------------------------------
# parabolic Harnack
# ---------------------------------------------------------------------------


def random_space_time_pairs(field, n, rng, t_min=0.05):
    """``(n, 4)`` node-index rows ``(k1, i1, k2, i2)`` with ``τ(k1) > t_min`` and ``k1 < k2``."""
    ks = np.flatnonzero(field.times - field.t_origin > t_min)
    if len(ks) < 2:
        raise ParameterError("need two stored levels past t_min")
    nodes = np.flatnonzero(field.grid.in_chart() & field.grid.interior(1))
    out = np.empty((n, 4), dtype=int)
    for r in range(n):
        k1, k2 = np.sort(rng.choice(ks, size=2, replace=False))
        out[r] = (k1, rng.choice(nodes), k2, rng.choice(nodes))
    return out


def random_node_pairs(field, n, rng):
    nodes = np.flatnonzero(field.grid.in_chart() & field.grid.interior(1))
    return np.stack([rng.choice(nodes, n), rng.choice(nodes, n)], axis=-1)


def parabolic_harnack_margin(field, cert, params, pairs, *, C=None, reference=None, t_ref=0.0, case="compact",
                             R=None, bundle=None, tolerance=None, D_variant=None):
    """``log(u₂/u₁)`` minus the path-argument lower bound, per space-time pair.

    ``pairs`` rows are ``(k1, i1, k2, i2)``.  ``reference`` defaults to the
    field's own family frozen at ``t_ref``; ``C`` defaults to the grid value
    of :func:`~harnacklab.flowcheck.metric_equivalence_constant` over the
    stored levels.  ``C₇`` is the proof-derived rate.
    """
    params.require_li_yau()
    _require_cert(cert, (ConditionKind.VARIANT_ALPHA,), params.K, "parabolic_harnack_margin")
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 4)
    t1 = field.times[pairs[:, 0]]
    t2 = field.times[pairs[:, 2]]
    if np.any(t1 >= t2):
        raise ParameterError("every pair needs t1 < t2")
    tau1, tau2 = t1 - field.t_origin, t2 - field.t_origin
    if np.any(tau1 <= 0):
        raise ParameterError("every pair needs t1 after the initial time")
    ref = field.family if reference is None else reference
    pts = field.grid.points()
    if C is None:
        C = metric_equivalence_constant(field.family, ref, t_ref, GridSpec(field.times, pts[field.grid.in_chart()]))
    D, E = li_yau_constants(cert, params, case, R, bundle, D_variant)
    c7, c7_displayed = c7_constants(cert, params, D, E)
    tol = discretisation_tolerance(field) if tolerance is None else float(tolerance)
    m, alpha = params.m, params.alpha
    p1, p2 = pts[pairs[:, 1]], pts[pairs[:, 3]]
    d_ref = np.asarray(distance(ref, t_ref, p1, p2), float).reshape(-1)
    dt = t2 - t1
    u1 = field.u[pairs[:, 0], pairs[:, 1]]
    u2 = field.u[pairs[:, 2], pairs[:, 3]]
    log_bound = -c7 * dt + 0.5 * m * alpha * np.log(tau1 / tau2) - C * alpha * d_ref**2 / (4 * dt)
    margin = np.log(u2 / u1) - log_bound
    locs = np.stack([t1, field.x[pairs[:, 1]], t2, field.x[pairs[:, 3]]], axis=-1)
    rep = HarnackReport.from_margins(
        "parabolic_harnack",
        margin,
        locs,
        tol,
        params_used=params.to_dict() | {"case": case, "t_ref": t_ref},
        cert_ref=_cert_dict(cert),
        notes=[PARABOLIC_DIRECTION_NOTE, "location is (t1, x1, t2, x2)"],
        values={"C": C, "C7": c7, "C7_displayed": c7_displayed, "D": D, "E": E, "n_pairs": int(len(pairs))},
    )
    rep.samples = {"t": t2, "x": field.x[pairs[:, 3]], "margin": margin}
    return rep


# ---------------------------------------------------------------------------
# Laplacian comparison and cutoff
# ---------------------------------------------------------------------------


def _cut_locus_mask(family, o, pts, band):
    chart = family.chart
    if chart.kind == LINE:
        return np.ones(len(pts), dtype=bool)
    if chart.kind in (CIRCLE, TORUS):
        delta = np.abs(chart.wrap_delta(pts - o))
        return np.all(delta < np.asarray(chart.periods) / 2 - band, axis=-1)
    if chart.kind == SPHERE:
        return np.asarray(chart.base_distance(o, pts)) < math.pi - band
    raise ParameterError(f"no cut-locus rule for chart {chart.kind}")


def laplacian_comparison_margin(family, pot, m, K1, K2, o, points, times, *, R=1.0, cutoff=None, rho_min=0.1,
                                cut_band=0.1, eps=1e-4, tolerance=1e-6):
    """Margins of the distance comparison and of the cutoff inequality.

    Returns ``(inner, inner_rho_form, cutoff_report)``.  ``inner`` checks
    ``Lρ ≤ (m−1)√K₁ coth(√K₁ρ)``; ``inner_rho_form`` checks the variant with
    an extra factor ``ρ`` on the right and is informational.  The cutoff
    report checks ``(L−∂ₜ)ψ ≥ −C₁K₂√ψ − (C₁/R)(m−1)√K₁coth(√K₁ρ) − C₂/R²``
    with ``ψ = η(ρ/R)``.  ``L`` is applied by finite differences of step
    ``eps``; nodes within ``rho_min`` of ``o``, within ``cut_band`` of the
    cut locus, or whose stencil leaves the chart are skipped.
    """
    if is_infinite_dim(m):
        raise ParameterError("the comparison needs a finite m")
    if not R > 0:
        raise ParameterError("R must be positive")
    prof = cutoff if cutoff is not None else cutoff_eta()
    calc = Calculus(family, pot)
    o = np.asarray(o, dtype=float).reshape(family.dim)
    pts = np.asarray(points, dtype=float).reshape(-1, family.dim)
    stencil_ok = np.all(family.chart.contains(stencil_points(pts, eps, family.dim)), axis=0)
    keep_cut = _cut_locus_mask(family, o, pts, cut_band) & stencil_ok
    rho_fn = lambda t, x: np.asarray(distance(family, t, o, x), float)  # noqa: E731
    psi_fn = lambda t, x: prof(rho_fn(t, x) / R)  # noqa: E731
    inner_m, rho_m, cut_m, locs = [], [], [], []
    for t in np.atleast_1d(np.asarray(times, float)):
        t = float(t)
        rho = rho_fn(t, pts)
        keep_in = keep_cut & (rho > rho_min)
        comp = (m - 1) * sqrtk_coth(K1, np.maximum(rho, 1e-300))
        L_rho = calc.witten(t, pts, fd_partials(rho_fn, t, pts, eps), fd_second_partials(rho_fn, t, pts, eps))
        inner_m.append(np.where(keep_in, comp - L_rho, np.nan))
        rho_m.append(np.where(keep_in, rho * comp - L_rho, np.nan))
        psi = psi_fn(t, pts)
        L_psi = calc.witten(t, pts, fd_partials(psi_fn, t, pts, eps), fd_second_partials(psi_fn, t, pts, eps))
        drho = np.array([distance_rate(family, t, o, p) if k else 0.0 for p, k in zip(pts, keep_cut)])
        dpsi = prof.d1(rho / R) * drho / R
        rhs = -prof.C1 * K2 * np.sqrt(psi) - prof.C1 / R * comp - prof.C2 / R**2
        cut_m.append(np.where(keep_cut, L_psi - dpsi - rhs, np.nan))
        locs.append(np.concatenate([np.full((len(pts), 1), t), pts], axis=-1))
    locs = np.concatenate(locs)
    used = {"m": m, "K1": K1, "K2": K2, "R": R, "base_point": o.tolist(), "rho_min": rho_min,
            "cut_band": cut_band, "eps": eps}
    out = []
    for cid, arr, notes in (
        ("laplacian_comparison", inner_m, ["location is (t, point)"]),
        ("laplacian_comparison_rho_form", rho_m,
         ["informational: the variant with an extra factor rho fails near the base point when K1 = 0"]),
        ("cutoff_inequality", cut_m, [f"C1={prof.C1:.6g}, C2={prof.C2:.6g}"]),
    ):
        arr = np.concatenate(arr)
        ok = np.isfinite(arr)
        rep = HarnackReport.from_margins(cid, arr[ok], locs[ok], tolerance, params_used=used, notes=notes,
                                         values={"n_points": int(ok.sum())})
        out.append(rep)
    return tuple(out)
