"""Residuals of the Bochner, commutator, evolution and Li-Yau chain identities.

Each residual applies one centred finite-difference stencil (step ``eps``)
to exact inner quantities built from a :class:`SymbolicField`, and compares
with the closed-form right-hand side.  Equalities therefore converge as
``O(eps²)``; inequalities are reported as signed margins.

Field versions evaluate the same quantities from a solved
:class:`~harnacklab.heat.SpaceTimeField` using the grid differences, for
radially reduced data (``∇u = (u_x, 0, ...)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ..errors import ParameterError
from ..flowcheck import (
    ConditionKind,
    FlowParams,
    GridSpec,
    certify_flow,
    divergence_terms,
    s_tensor,
    _grad_dphi_dt,
    _inv_m_minus_n,
)
from ..geometry import M_INF, bakry_emery_ricci, is_infinite_dim
from ..heat import _space_diff, derive_fields, time_derivative, witten_apply, apply_in_time
from ..symbolic import SymbolicField
from .bounds import psi_factor, psi_derivative
from .fd import Calculus, fd_dt, fd_partials

ROUNDOFF_FLOOR = 1e-8


@dataclass
class ResidualResult:
    """Outcome of one identity or inequality suite.

    For equalities ``values`` holds the scaled max residual per step in
    ``eps``; ``order`` is the observed convergence order between the first
    two steps.  For inequalities ``values`` holds the worst scaled margin.
    """

    identity_id: str
    kind: str
    eps: tuple
    values: tuple
    tolerance: float
    passed: bool
    order: float = float("nan")
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "identity_id": self.identity_id,
            "kind": self.kind,
            "eps": list(self.eps),
            "values": [float(v) for v in self.values],
            "order": None if not math.isfinite(self.order) else float(self.order),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "notes": list(self.notes),
        }

    def __str__(self):
        tag = "PASS" if self.passed else "FAIL"
        extra = f", order {self.order:.3f}" if math.isfinite(self.order) else ""
        return f"[{tag}] {self.identity_id}: {', '.join(f'{v:.3e}' for v in self.values)}{extra}"


def _scaled_max(residual, scale):
    residual = np.asarray(residual, float)
    scale = np.asarray(scale, float)
    return float(np.max(np.abs(residual)) / (1.0 + np.max(np.abs(scale))))


def convergence_study(identity_id, fn, eps_list=(1e-2, 1e-3), min_order=1.9, floor=ROUNDOFF_FLOOR):
    """Run ``fn(eps) -> (residual, scale)`` and estimate the convergence order.

    Passes when the observed order is at least ``min_order`` or the residual
    at the finest step is already below ``floor`` (exact to round-off).
    """
    vals = tuple(_scaled_max(*fn(e)) for e in eps_list)
    order = float("nan")
    if len(vals) >= 2 and vals[0] > 0 and vals[1] > 0:
        order = math.log(vals[0] / vals[1]) / math.log(eps_list[0] / eps_list[1])
    passed = vals[-1] <= floor or (math.isfinite(order) and order >= min_order)
    notes = []
    if vals[-1] <= floor:
        notes.append(f"finest residual below round-off floor {floor:g}")
    return ResidualResult(identity_id, "equality", tuple(eps_list), vals, floor, passed, order, notes)


def inequality_result(identity_id, margins, scale, tolerance, eps=()):
    margins = np.asarray(margins, float)
    finite = margins[np.isfinite(margins)]
    worst = float(np.min(finite)) / (1.0 + float(np.max(np.abs(scale)))) if finite.size else float("nan")
    passed = bool(finite.size) and worst >= -tolerance
    return ResidualResult(identity_id, "inequality", tuple(eps), (worst,), tolerance, passed)


# ---------------------------------------------------------------------------
# symbolic residuals at explicit points
# ---------------------------------------------------------------------------


def _ric_L(family, pot, t, x, m=M_INF):
    return bakry_emery_ricci(family, pot, m, t, x)


def heat_residual(family, pot, u, t, x):
    """``∂ₜu − Lu`` evaluated exactly (a precondition for the heat identities)."""
    calc = Calculus(family, pot)
    return u.dt(t, x) - calc.witten_of(u)(t, x)


def bochner_residual(family, pot, u, t, x, eps=1e-3):
    """``L|∇u|² − 2⟨∇u, ∇Lu⟩ − 2|∇²u|² − 2Ric(L)(∇u, ∇u)``; returns ``(residual, scale)``."""
    calc = Calculus(family, pot)
    du = u.partial(t, x)
    lhs = calc.fd_witten(calc.grad_sq_of(u), t, x, eps) - 2 * calc.inner(
        t, x, du, fd_partials(calc.witten_of(u), t, x, eps)
    )
    rhs = 2 * calc.tensor_sq(t, x, calc.hessian_of(u)(t, x)) + 2 * calc.form(t, x, _ric_L(family, pot, t, x), du)
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def commutator_rhs(family, pot, f, t, x, step=1e-5):
    """``−2⟨h, ∇²f⟩ + 2h(∇φ, ∇f) − ⟨2 div h − ∇Tr h + ∇∂ₜφ, ∇f⟩`` evaluated exactly."""
    calc = Calculus(family, pot)
    h = family.metric_rate(t, x)
    df = f.partial(t, x)
    div_h, grad_tr = divergence_terms(family, t, x, step)
    vec = 2 * div_h - grad_tr + _grad_dphi_dt(pot, t, x, step)
    return (
        -2 * calc.tensor_inner(t, x, h, calc.hessian_of(f)(t, x))
        + 2 * calc.form(t, x, h, pot.dphi(t, x), df)
        - calc.inner(t, x, vec, df)
    )


def gradient_rate_residual(family, pot, f, t, x, eps=1e-3):
    """``∂ₜ|∇f|² + 2h(∇f, ∇f) − 2⟨∇f, ∇fₜ⟩``."""
    calc = Calculus(family, pot)
    df = f.partial(t, x)
    lhs = fd_dt(calc.grad_sq_of(f), t, x, eps)
    rhs = -2 * calc.form(t, x, family.metric_rate(t, x), df) + 2 * calc.inner(t, x, df, f.partial_dt(t, x))
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def commutator_residual(family, pot, f, t, x, eps=1e-3):
    """``∂ₜ(Lf) − L(∂ₜf) − [∂ₜ, L]f`` against the closed form."""
    calc = Calculus(family, pot)
    lhs = fd_dt(calc.witten_of(f), t, x, eps) - calc.witten_of(f.time_derivative())(t, x)
    rhs = commutator_rhs(family, pot, f, t, x)
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def _heat_op(calc, fn, t, x, eps):
    """``(∂ₜ − L)fn`` by finite differences."""
    return fd_dt(fn, t, x, eps) - calc.fd_witten(fn, t, x, eps)


def evolution_identity_residual(family, pot, u, t, x, eps=1e-3):
    """``(∂ₜ−L)(|∇u|²/u) + (2/u)|∇²u − ∇u⊗∇u/u|² + (2/u)(h + Ric(L))(∇u, ∇u)``."""
    calc = Calculus(family, pot)
    grad_sq = calc.grad_sq_of(u)
    q = lambda tt, xx: grad_sq(tt, xx) / u.value(tt, xx)
    lhs = _heat_op(calc, q, t, x, eps)
    uu, du = u.value(t, x), u.partial(t, x)
    hess = calc.hessian_of(u)(t, x) - np.einsum("...i,...j->...ij", du, du) / uu[..., None, None]
    tensor = family.metric_rate(t, x) + _ric_L(family, pot, t, x)
    rhs = -(2 / uu) * calc.tensor_sq(t, x, hess) - (2 / uu) * calc.form(t, x, tensor, du)
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def companion_identity_residual(family, pot, u, t, x, A, eps=1e-3):
    """``(∂ₜ−L)(u log(A/u)) − |∇u|²/u``."""
    calc = Calculus(family, pot)
    p = lambda tt, xx: u.value(tt, xx) * np.log(A / u.value(tt, xx))
    lhs = _heat_op(calc, p, t, x, eps)
    rhs = calc.grad_sq_of(u)(t, x) / u.value(t, x)
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def evolution_sign_margin(family, pot, u, t, x, K, eps=1e-3):
    """``2K|∇u|²/u − (∂ₜ−L)(|∇u|²/u)`` (non-negative on certified flows)."""
    calc = Calculus(family, pot)
    grad_sq = calc.grad_sq_of(u)
    q = lambda tt, xx: grad_sq(tt, xx) / u.value(tt, xx)
    val = q(t, x)
    lhs = _heat_op(calc, q, t, x, eps)
    return 2 * K * val - lhs, np.abs(lhs) + np.abs(2 * K * val)


def max_principle_margin(family, pot, u, t, x, A, K, t_origin=0.0, eps=1e-3):
    """``−(∂ₜ−L)H`` for ``H = ψ(τ)|∇u|²/u − u log(A/u)`` (non-negative on certified flows)."""
    calc = Calculus(family, pot)
    grad_sq = calc.grad_sq_of(u)
    H = lambda tt, xx: psi_factor(tt - t_origin, K) * grad_sq(tt, xx) / u.value(tt, xx) - u.value(tt, xx) * np.log(
        A / u.value(tt, xx)
    )
    val = _heat_op(calc, H, t, x, eps)
    return -val, np.abs(val) + grad_sq(t, x) / u.value(t, x)


def log_field(u):
    """``f = log u`` as a :class:`SymbolicField`."""
    return SymbolicField(sp.log(u.expr), u.dim, name=f"log({u.name})")


def _li_yau_F(calc, f, alpha, t_origin):
    grad_sq = calc.grad_sq_of(f)
    return lambda tt, xx: (tt - t_origin) * (grad_sq(tt, xx) - alpha * f.dt(tt, xx))


def li_yau_F_identity_residual(family, pot, u, t, x, alpha, t_origin=0.0, eps=1e-3):
    """``(L−∂ₜ)F`` against ``2τ(|∇²f|² + (Ric(L)+(1−α)h)(∇f,∇f)) − 2⟨∇f,∇F⟩ − F/τ + ατ[∂ₜ,L]f``."""
    calc = Calculus(family, pot)
    f = log_field(u)
    F = _li_yau_F(calc, f, alpha, t_origin)
    tau = t - t_origin
    lhs = calc.fd_witten(F, t, x, eps) - fd_dt(F, t, x, eps)
    df = f.partial(t, x)
    tensor = _ric_L(family, pot, t, x) + (1 - alpha) * family.metric_rate(t, x)
    rhs = (
        2 * tau * (calc.tensor_sq(t, x, calc.hessian_of(f)(t, x)) + calc.form(t, x, tensor, df))
        - 2 * calc.inner(t, x, df, fd_partials(F, t, x, eps))
        - F(t, x) / tau
        + alpha * tau * commutator_rhs(family, pot, f, t, x)
    )
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def _A_sq_local(family, t, x, m):
    ginv = family.inverse_metric(t, x)
    h = family.metric_rate(t, x)
    tr = np.einsum("...ij,...ij->...", ginv, h)
    hsq = np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, h, h)
    coef = _inv_m_minus_n(m, family.dim_n, bool(np.all(np.abs(tr) < 1e-12)))
    return hsq + coef * tr**2


def lemma_F_margin(family, pot, u, t, x, m, alpha, t_origin=0.0, eps=1e-3):
    """``(L−∂ₜ)F`` minus the pointwise lower bound built from ``Ric_{m,n}(L)`` and ``S``."""
    if is_infinite_dim(m):
        raise ParameterError("the chain inequality needs finite m")
    calc = Calculus(family, pot)
    f = log_field(u)
    F = _li_yau_F(calc, f, alpha, t_origin)
    tau = t - t_origin
    lhs = calc.fd_witten(F, t, x, eps) - fd_dt(F, t, x, eps)
    df = f.partial(t, x)
    g2 = calc.grad_sq_of(f)(t, x)
    Fv = F(t, x)
    tensor = bakry_emery_ricci(family, pot, m, t, x) + (1 - alpha) * family.metric_rate(t, x)
    S = s_tensor(family, pot, m, t, x)
    rhs = (
        2 * Fv**2 / (alpha**2 * m * tau)
        + 4 * (alpha - 1) / (m * alpha**2) * g2 * Fv
        + 2 * tau * (alpha - 1) ** 2 / (m * alpha**2) * g2**2
        - tau * alpha**2 / 2 * _A_sq_local(family, t, x, m)
        + 2 * tau * calc.form(t, x, tensor, df)
        - 2 * calc.inner(t, x, df, fd_partials(F, t, x, eps))
        - Fv / tau
        + alpha * tau * calc.inner(t, x, S, df)
    )
    return lhs - rhs, np.abs(lhs) + np.abs(rhs)


def chain_rhs(F, grad_F_term, tau, m, alpha, gamma, K, A_sq, B):
    """Right-hand side of the consolidated chain inequality."""
    return (
        2 * F**2 / (alpha**2 * m * tau)
        - F / tau
        - grad_F_term
        - tau * alpha**2 * A_sq / 2
        - m * alpha**2 * tau * (2 * K + gamma) ** 2 / (8 * (alpha - 1) ** 2)
        - alpha**2 * B**2 * tau / (4 * gamma)
    )


def chain_margin(family, pot, u, t, x, cert, params, t_origin=0.0, eps=1e-3):
    """``(L−∂ₜ)F`` minus the consolidated lower bound, at nodes where ``F ≥ 0``.

    The consolidation discards ``4(α−1)|∇f|²F/(mα²)``, so it is only
    implied where ``F`` is non-negative; other nodes come back as NaN.
    """
    params.require_li_yau()
    m, alpha, gamma, K = params.m, params.alpha, params.gamma, params.K
    calc = Calculus(family, pot)
    f = log_field(u)
    F = _li_yau_F(calc, f, alpha, t_origin)
    tau = t - t_origin
    lhs = calc.fd_witten(F, t, x, eps) - fd_dt(F, t, x, eps)
    Fv = F(t, x)
    grad_term = 2 * calc.inner(t, x, f.partial(t, x), fd_partials(F, t, x, eps))
    rhs = chain_rhs(Fv, grad_term, tau, m, alpha, gamma, K, cert.A_sq, cert.B_const)
    margin = np.where(Fv >= 0, lhs - rhs, np.nan)
    return margin, np.abs(lhs) + np.abs(rhs)


# ---------------------------------------------------------------------------
# identity suites over a test case
# ---------------------------------------------------------------------------


def _over_times(fn, times, points):
    res, scl = zip(*(fn(float(t), points) for t in times))
    return np.concatenate([np.ravel(r) for r in res]), np.concatenate([np.ravel(s) for s in scl])


def auto_certify(family, pot, m, alpha, times, points):
    """Variant-α certificate with the smallest ``K`` that passes on the given nodes."""
    grid = GridSpec(np.asarray(times, float), np.asarray(points, float), "identity sample nodes")
    probe = certify_flow(family, pot, FlowParams(K=0.0, m=m, alpha=alpha), ConditionKind.VARIANT_ALPHA, grid)
    K = max(0.0, -probe.min_margin) * (1 + 1e-9)
    params = FlowParams(K=K, m=m, alpha=alpha)
    return certify_flow(family, pot, params, ConditionKind.VARIANT_ALPHA, grid), params


def run_identity_case(case, eps_list=(1e-2, 1e-3), tolerance=1e-8, cert=None, params=None):
    """All applicable residual suites for a :class:`~harnacklab.harnack.testcases.IdentityCase`.

    Heat-solution cases with a finite ``m`` also run the chain inequality,
    certified on the sample nodes unless ``cert`` and ``params`` are given.
    """
    fam, pot, u, pts, times = case.family, case.pot, case.u, case.points, case.times
    out = []
    tag = case.name
    if case.heat_solution:
        heat = max(_scaled_max(heat_residual(fam, pot, u, float(t), pts), u.value(float(t), pts)) for t in times)
        out.append(
            ResidualResult(f"heat_equation[{tag}]", "equality", (), (heat,), 1e-10, heat < 1e-10,
                           notes=["exact check that the test function solves the heat equation"])
        )
    out.append(convergence_study(
        f"bochner[{tag}]", lambda e: _over_times(lambda t, x: bochner_residual(fam, pot, u, t, x, e), times, pts),
        eps_list))
    out.append(convergence_study(
        f"gradient_rate[{tag}]",
        lambda e: _over_times(lambda t, x: gradient_rate_residual(fam, pot, u, t, x, e), times, pts), eps_list))
    out.append(convergence_study(
        f"commutator[{tag}]",
        lambda e: _over_times(lambda t, x: commutator_residual(fam, pot, u, t, x, e), times, pts), eps_list))
    if not case.heat_solution:
        return out
    A = case.sup_bound
    t0 = case.t_origin
    out.append(convergence_study(
        f"evolution_identity[{tag}]",
        lambda e: _over_times(lambda t, x: evolution_identity_residual(fam, pot, u, t, x, e), times, pts), eps_list))
    out.append(convergence_study(
        f"companion_identity[{tag}]",
        lambda e: _over_times(lambda t, x: companion_identity_residual(fam, pot, u, t, x, A, e), times, pts),
        eps_list))
    e_fine = eps_list[-1]
    out.append(inequality_result(
        f"evolution_sign[{tag}]",
        *_over_times(lambda t, x: evolution_sign_margin(fam, pot, u, t, x, case.K, e_fine), times, pts),
        tolerance, (e_fine,)))
    out.append(inequality_result(
        f"max_principle_function[{tag}]",
        *_over_times(lambda t, x: max_principle_margin(fam, pot, u, t, x, A, case.K, t0, e_fine), times, pts),
        tolerance, (e_fine,)))
    alpha = case.alpha
    out.append(convergence_study(
        f"li_yau_F_identity[{tag}]",
        lambda e: _over_times(lambda t, x: li_yau_F_identity_residual(fam, pot, u, t, x, alpha, t0, e), times, pts),
        eps_list))
    if case.m is not None:
        out.append(inequality_result(
            f"li_yau_F_lower_bound[{tag}]",
            *_over_times(lambda t, x: lemma_F_margin(fam, pot, u, t, x, case.m, alpha, t0, e_fine), times, pts),
            tolerance, (e_fine,)))
    if cert is None and case.m is not None:
        cert, params = auto_certify(fam, pot, case.m, alpha, times, pts)
    if cert is not None and params is not None:
        out.append(inequality_result(
            f"li_yau_chain[{tag}]",
            *_over_times(lambda t, x: chain_margin(fam, pot, u, t, x, cert, params, t0, e_fine), times, pts),
            tolerance, (e_fine,)))
    return out


# ---------------------------------------------------------------------------
# field versions (radially reduced solved data)
# ---------------------------------------------------------------------------


def _node_tensors(field, t):
    """``(g, g⁻¹, Γ, h, Ric(L))`` at the reference points of every node."""
    fam = field.family
    pts = field.grid.points()
    return (
        fam.metric(t, pts),
        fam.inverse_metric(t, pts),
        fam.christoffel(t, pts),
        fam.metric_rate(t, pts),
        bakry_emery_ricci(fam, field.pot, M_INF, t, pts),
    )


def field_evolution_residual(field, K=0.0, derived=None):
    """Nodewise ``(identity residual, sign margin, scale)`` for a solved field.

    Uses the discrete operator for ``L`` and centred differences in time,
    so the residual is ``O(Δx² + Δt)`` for smooth data.
    """
    d = derived if derived is not None else derive_fields(field)
    u, ux, uxx = field.u, d.u_x, d.u_xx
    grid = field.grid
    q = np.where(np.isfinite(d.grad_u_sq), d.grad_u_sq, 0.0) / u
    lq = apply_in_time(lambda k, t: witten_apply(q[k], field.family, field.pot, t, grid), field)
    dq = time_derivative(q, field.times)
    lhs = dq - lq
    rhs = np.full(u.shape, np.nan)
    for k, t in enumerate(field.times):
        g, ginv, gam, h, ric = _node_tensors(field, float(t))
        dim = g.shape[-1]
        du = np.zeros(ux.shape[1:] + (dim,))
        du[:, 0] = ux[k]
        hess = -gam[:, 0] * ux[k][:, None, None]
        hess[:, 0, 0] += uxx[k]
        hess -= np.einsum("...i,...j->...ij", du, du) / u[k][:, None, None]
        sq = np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, hess, hess)
        up = np.einsum("...ij,...j->...i", ginv, du)
        form = np.einsum("...ij,...i,...j->...", h + ric, up, up)
        rhs[k] = -(2 / u[k]) * sq - (2 / u[k]) * form
    mask = np.isfinite(d.grad_u_sq)
    mask[:, :2] &= grid.periodic
    mask[:, -2:] &= grid.periodic
    if hasattr(grid, "in_chart"):
        mask &= grid.in_chart()[None, :]
    resid = np.where(mask, lhs - rhs, np.nan)
    sign = np.where(mask, 2 * K * q - lhs, np.nan)
    return resid, sign, np.abs(lhs) + np.abs(rhs)


def field_chain_margin(field, cert, params, derived=None, t_min=0.05):
    """Consolidated chain inequality on a solved field, at nodes with ``F ≥ 0``."""
    params.require_li_yau()
    alpha = float(params.alpha)
    d = derived if derived is not None else derive_fields(field, (alpha,))
    if alpha not in d.F:
        d = derive_fields(field, (alpha,))
    grid = field.grid
    F = d.F[alpha]
    Fz = np.where(np.isfinite(F), F, 0.0)
    LF = apply_in_time(lambda k, t: witten_apply(Fz[k], field.family, field.pot, t, grid), field)
    dF = time_derivative(Fz, field.times)
    F_x = _space_diff(Fz, grid.dx, grid.periodic, 1)
    grad_term = 2 * d.kappa * d.f_x * F_x
    tau = d.tau[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = chain_rhs(F, grad_term, tau, params.m, alpha, params.gamma, params.K, cert.A_sq, cert.B_const)
    margin = LF - dF - rhs
    mask = np.isfinite(F) & (F >= 0) & (tau > t_min)
    if not grid.periodic:
        mask[:, :2] = False
        mask[:, -2:] = False
    mask[[0, -1], :] = False
    mask &= grid.in_chart()[None, :]
    return np.where(mask, margin, np.nan), np.abs(LF - dF) + np.abs(rhs)
