"""Grid certificates for super Ricci flow conditions and the Harnack constants.

A certificate evaluates one curvature condition on a space-time lattice,
reports its smallest generalised eigenvalue margin against ``g`` and collects
the suprema that the Li-Yau bounds consume: ``A²``, ``B``, ``K₁``, ``K₂``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DegeneracyError, ParameterError
from .geometry import SPHERE, M_INF, _as_points, bakry_emery_ricci, is_infinite_dim


class ConditionKind(str, enum.Enum):
    SUPER_PERELMAN = "super_perelman"  # ½∂ₜg + Ric(L) ≥ K g
    SUPER_PERELMAN_M = "super_perelman_m"  # ½∂ₜg + Ric_{m,n}(L) ≥ K g
    VARIANT_ALPHA = "variant_alpha"  # ½(1−α)∂ₜg + Ric_{m,n}(L) ≥ −K g


@dataclass(frozen=True)
class FlowParams:
    K: float = 0.0
    m: float = M_INF
    alpha: float = 2.0
    gamma: Optional[float] = None
    delta: float = 1.0

    def __post_init__(self):
        if self.gamma is None:
            object.__setattr__(self, "gamma", (self.alpha - 1.0) * max(2.0 * self.K, 1.0))
        if not self.delta > 0:
            raise ParameterError("delta must be positive")
        if self.K < 0:
            raise ParameterError("K is the magnitude of the allowed negative part and must be >= 0")

    def require_li_yau(self):
        if not self.alpha > 1:
            raise ParameterError(f"alpha={self.alpha} must exceed 1 for Li-Yau bounds")
        if not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if is_infinite_dim(self.m):
            raise ParameterError("Li-Yau bounds need a finite m")

    def to_dict(self):
        d = asdict(self)
        d["m"] = "inf" if is_infinite_dim(self.m) else self.m
        return d


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice: ``times`` (n_t,) and chart ``points`` (n_p, d)."""

    times: np.ndarray
    points: np.ndarray
    description: str = ""

    def union(self, other):
        return GridSpec(
            np.unique(np.concatenate([self.times, other.times])),
            np.concatenate([self.points, other.points]),
            f"{self.description} ∪ {other.description}",
        )

    def to_dict(self):
        return {
            "n_times": int(len(self.times)),
            "t_range": [float(self.times.min()), float(self.times.max())],
            "n_points": int(len(self.points)),
            "description": self.description,
        }


def make_grid(family, times, n_per_axis=32, axis_ranges=None):
    """Tensor lattice over the chart's valid region.

    Periodic axes are sampled without the duplicate endpoint; bounded axes
    include both ends.  ``axis_ranges`` overrides the range per axis.
    """
    chart = family.chart
    axes = []
    for ax in range(chart.dim):
        if axis_ranges is not None and axis_ranges[ax] is not None:
            lo, hi = axis_ranges[ax]
            axes.append(np.linspace(lo, hi, n_per_axis))
            continue
        period = chart.axis_period(ax)
        if period is not None:
            axes.append(np.linspace(0.0, period, n_per_axis, endpoint=False))
        elif chart.kind == SPHERE:
            axes.append(np.linspace(chart.theta_min, math.pi - chart.theta_min, n_per_axis))
        else:
            lo, hi = chart.interval
            axes.append(np.linspace(lo, hi, n_per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return GridSpec(times, pts, f"{chart.kind} lattice {n_per_axis}^{chart.dim} x {len(times)} times")


@dataclass
class FlowCertificate:
    condition_kind: ConditionKind
    threshold: float
    min_margin: float
    argmin: tuple
    A_sq: float
    B_const: float
    K1: float
    K2: float
    grid_spec: dict
    passed: bool
    tolerance: float
    params: FlowParams
    max_trace_defect: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "condition_kind": self.condition_kind.value,
            "threshold": self.threshold,
            "min_margin": self.min_margin,
            "argmin": [float(v) for v in np.ravel(self.argmin)],
            "A_sq": self.A_sq,
            "B_const": self.B_const,
            "K1": self.K1,
            "K2": self.K2,
            "grid_spec": self.grid_spec,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "params": self.params.to_dict(),
            "max_trace_defect": self.max_trace_defect,
            "notes": list(self.notes),
        }


def _metric_rate_grad(family, t, x, step):
    if family.metric_rate_grad is not None:
        return family.metric_rate_grad(t, x)
    d = family.dim
    out = np.empty(x.shape[:-1] + (d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        out[..., k, :, :] = (family.metric_rate(t, x + e) - family.metric_rate(t, x - e)) / (2 * step)
    return out


def _grad_dphi_dt(pot, t, x, step):
    if pot.grad_dphi_dt is not None:
        return pot.grad_dphi_dt(t, x)
    d = x.shape[-1]
    out = np.empty(x.shape)
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        out[..., k] = (pot.dphi_dt(t, x + e) - pot.dphi_dt(t, x - e)) / (2 * step)
    return out


def _inv_m_minus_n(m, n, numerator_zero):
    """Coefficient ``1/(m−n)`` with the ∞ and m = n conventions."""
    if is_infinite_dim(m):
        return 0.0
    if m == n:
        if not numerator_zero:
            raise ParameterError("m = n requires the dimension-defect terms to vanish")
        return 0.0
    if m < n:
        raise ParameterError(f"m={m} must be at least n={n}")
    return 1.0 / (m - n)


def divergence_terms(family, t, x, step=1e-5):
    """Covectors ``div h`` and ``∇ Tr_g h`` (covariant, analytic Christoffels)."""
    x = _as_points(x, family.dim)
    ginv = family.inverse_metric(t, x)
    h = family.metric_rate(t, x)
    dh = _metric_rate_grad(family, t, x, step)  # [i, j, l] = ∂ᵢ h_jl
    gamma = family.christoffel(t, x)  # [p, i, j]
    nabla_h = dh - np.einsum("...pij,...pl->...ijl", gamma, h) - np.einsum("...pil,...jp->...ijl", gamma, h)
    div_h = np.einsum("...ij,...ijl->...l", ginv, nabla_h)
    grad_tr = np.einsum("...ij,...lij->...l", ginv, nabla_h)
    return div_h, grad_tr


def s_tensor(family, pot, m, t, x, step=1e-5):
    """The covector S from the Li-Yau constant B.

    ``S = 2h(∇φ, ·) − (2 div h − ∇Tr h + ∇∂ₜφ) + (2 Tr h/(m−n)) dφ``; the last
    term is absent for ``m = M_INF``.
    """
    x = _as_points(x, family.dim)
    n = family.dim_n
    ginv = family.inverse_metric(t, x)
    h = family.metric_rate(t, x)
    grad_phi = pot.grad_phi(t, x)
    div_h, grad_tr = divergence_terms(family, t, x, step)
    s = 2.0 * np.einsum("...ij,...i->...j", h, grad_phi) - (2.0 * div_h - grad_tr + _grad_dphi_dt(pot, t, x, step))
    tr_h = np.einsum("...ij,...ij->...", ginv, h)
    coef = _inv_m_minus_n(m, n, pot.is_zero)
    if coef:
        s = s + (2.0 * coef) * tr_h[..., None] * pot.dphi(t, x)
    return s


def _min_gen_eig(tensor, g):
    """Smallest eigenvalue of ``tensor`` relative to ``g`` for a stack of matrices."""
    d = g.shape[-1]
    if d == 1:
        return tensor[..., 0, 0] / g[..., 0, 0]
    flat_t = tensor.reshape(-1, d, d)
    flat_g = g.reshape(-1, d, d)
    out = np.empty(len(flat_t))
    for i, (a, b) in enumerate(zip(flat_t, flat_g)):
        try:
            out[i] = linalg.eigh(0.5 * (a + a.T), b, eigvals_only=True)[0]
        except linalg.LinAlgError:
            raise DegeneracyError("metric is not positive definite on the certificate grid") from None
    return out.reshape(g.shape[:-2])


def default_threshold(params, kind):
    """Signed coefficient ``c`` in ``LHS ≥ c·g``: ``+K`` for the super flows, ``−K`` for the variant."""
    return -params.K if ConditionKind(kind) is ConditionKind.VARIANT_ALPHA else params.K


def condition_tensor(family, pot, params, kind, t, x):
    """Left-hand tensor of the condition at ``(t, x)``."""
    kind = ConditionKind(kind)
    h = family.metric_rate(t, x)
    if kind is ConditionKind.SUPER_PERELMAN:
        return h + bakry_emery_ricci(family, pot, M_INF, t, x)
    ric_mn = bakry_emery_ricci(family, pot, params.m, t, x)
    if kind is ConditionKind.SUPER_PERELMAN_M:
        return h + ric_mn
    return (1.0 - params.alpha) * h + ric_mn


def certify_flow(family, pot, params, kind, grid, tolerance=1e-10, step=1e-5, threshold=None):
    """Evaluate ``kind`` on every grid node and collect the Harnack constants.

    ``min_margin`` is the minimum over nodes of the smallest eigenvalue of
    ``LHS − threshold·g`` relative to ``g``; ``threshold`` defaults to
    :func:`default_threshold` and may be given explicitly (for instance
    ``−K`` for a ``(−K)``-super Perelman flow).  ``K1``/``K2`` are the
    smallest non-negative constants with ``Ric_{m,n}(L) ≥ −K1 g`` and
    ``h ≥ −K2 g``.
    """
    kind = ConditionKind(kind)
    thr = default_threshold(params, kind) if threshold is None else float(threshold)
    n = family.dim_n
    pts = _as_points(grid.points, family.dim)
    if len(pts) == 0 or len(grid.times) == 0:
        raise ParameterError("certificate grid is empty")
    best = (math.inf, None)
    a_sq = b_const = neg_ric = neg_h = 0.0
    trace_defect = 0.0
    for t in grid.times:
        t = float(t)
        family.check_time(t)
        g = family.metric(t, pts)
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise DegeneracyError(f"metric is not positive definite at t={t}") from None
        ginv = np.linalg.inv(g)
        lhs = condition_tensor(family, pot, params, kind, t, pts)
        margins = _min_gen_eig(lhs - thr * g, g)
        i = int(np.argmin(margins))
        if margins[i] < best[0]:
            best = (float(margins[i]), (t,) + tuple(pts[i]))

        h = family.metric_rate(t, pts)
        h_up = np.einsum("...ij,...jk->...ik", ginv, h)
        h_norm2 = np.einsum("...ij,...ji->...", h_up, h_up)
        tr_h = np.einsum("...ii->...", h_up)
        trace_defect = max(trace_defect, float(np.max(tr_h**2 - n * h_norm2)))
        if not is_infinite_dim(params.m) and params.m == n and np.any(tr_h != 0):
            a_sq = math.inf  # (Tr h)²/(m−n) is unbounded
        else:
            coef = _inv_m_minus_n(params.m, n, True)
            a_sq = max(a_sq, float(np.max(h_norm2 + coef * tr_h**2)))

        s = s_tensor(family, pot, params.m, t, pts, step)
        s_norm = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", s, ginv, s), 0.0))
        b_const = max(b_const, float(np.max(s_norm)))

        ric_mn = bakry_emery_ricci(family, pot, params.m, t, pts)
        neg_ric = max(neg_ric, float(np.max(-_min_gen_eig(ric_mn, g))))
        neg_h = max(neg_h, float(np.max(-_min_gen_eig(h, g))))

    notes = []
    if math.isinf(a_sq):
        notes.append("A_sq is infinite: m = n with a non-zero trace of h")
    if trace_defect > 1e-9 * max(1.0, a_sq):
        notes.append(f"trace inequality (Tr h)^2 <= n|h|^2 violated by {trace_defect:.3e}")
    return FlowCertificate(
        condition_kind=kind,
        threshold=thr,
        min_margin=best[0],
        argmin=best[1],
        A_sq=a_sq,
        B_const=b_const,
        K1=max(0.0, neg_ric),
        K2=max(0.0, neg_h),
        grid_spec=grid.to_dict(),
        passed=best[0] >= -tolerance,
        tolerance=tolerance,
        params=params,
        max_trace_defect=max(0.0, trace_defect),
        notes=notes,
    )


def constant_D(cert, params, variant="compact"):
    """Li-Yau radicand ``4A² + m(2K+γ)²/(α−1)² + (2B²/γ | B²/(2γ))``.

    ``variant='compact'`` uses ``2B²/γ`` and ``'complete'`` uses ``B²/(2γ)``;
    ``'safe'`` takes the larger of the two.
    """
    m, alpha, gamma, K = params.m, params.alpha, params.gamma, params.K
    if is_infinite_dim(m):
        raise ParameterError("constant_D needs a finite m")
    if not alpha > 1:
        raise ParameterError("constant_D needs alpha > 1")
    B = cert.B_const
    if B == 0.0:
        b_term_compact = b_term_complete = 0.0
    else:
        if not gamma > 0:
            raise ParameterError("gamma must be positive")
        b_term_compact = 2.0 * B**2 / gamma
        b_term_complete = B**2 / (2.0 * gamma)
    base = 4.0 * cert.A_sq + m * (2.0 * K + gamma) ** 2 / (alpha - 1.0) ** 2
    if variant == "compact":
        return base + b_term_compact
    if variant == "complete":
        return base + b_term_complete
    if variant == "safe":
        return base + max(b_term_compact, b_term_complete)
    raise ParameterError(f"unknown D variant {variant!r}")


@dataclass(frozen=True)
class CutoffConstants:
    """Constants of the localisation argument wired from a certified cutoff."""

    C1: float
    C2: float
    C4: float
    C5: float
    C6: float
    wiring: str

    def to_dict(self):
        return asdict(self)


def wire_cutoff_constants(C1, C2, m, alpha=None, include_proof_term=False):
    """``C₄ = C₁·max(1, m−1)``, ``C₅ = C₁(m−1)``, ``C₆ = 2C₁ + C₂``.

    ``C₄`` must dominate both ``C₁K₂`` and ``C₁(m−1)√K₁``.  With
    ``include_proof_term`` the ``mα²C₂²/(4(α−1))`` contribution that the
    localisation produces is folded into ``C₆``.
    """
    c4 = C1 * max(1.0, m - 1.0)
    c5 = C1 * (m - 1.0)
    c6 = 2.0 * C1 + C2
    wiring = "C4=C1*max(1,m-1); C5=C1*(m-1); C6=2*C1+C2"
    if include_proof_term:
        if alpha is None or not alpha > 1:
            raise ParameterError("include_proof_term needs alpha > 1")
        c6 += m * alpha**2 * C2**2 / (4.0 * (alpha - 1.0))
        wiring += " + m*alpha^2*C2^2/(4(alpha-1))"
    return CutoffConstants(C1, C2, c4, c5, c6, wiring)


def constant_E(cert, params, R, bundle):
    """``E = C₄(K₂ + √K₁) + C₅/R + C₆/R²`` (``R = inf`` drops the boundary terms)."""
    if not R > 0:
        raise ParameterError("R must be positive")
    e = bundle.C4 * (cert.K2 + math.sqrt(cert.K1))
    if math.isfinite(R):
        e += bundle.C5 / R + bundle.C6 / R**2
    return e


def metric_equivalence_constant(family, reference, t_ref, grid):
    """Smallest ``C`` with ``C⁻¹ g̃ ≤ g(t) ≤ C g̃`` on the grid (``g̃ = reference(t_ref)``)."""
    pts = _as_points(grid.points, family.dim)
    gref = reference.metric(t_ref, pts)
    worst = 1.0
    for t in grid.times:
        g = family.metric(float(t), pts)
        lo = _min_gen_eig(g, gref)
        hi = -_min_gen_eig(-g, gref)
        worst = max(worst, float(np.max(hi)), float(np.max(1.0 / lo)))
    return worst
