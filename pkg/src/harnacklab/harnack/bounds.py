"""Closed-form right-hand sides of the Harnack estimates."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from ..flowcheck import constant_D, constant_E
from .report import HarnackReport

_SERIES_CUTOFF = 1e-6


def _check_K(K):
    if not K >= 0:
        raise ParameterError(f"K={K} must be non-negative")


def psi_factor(t, K):
    """``ψ(t) = (1 − e^{−2Kt})/(2K)``, equal to ``t`` at ``K = 0``.

    Evaluated with ``expm1`` and a Taylor branch for ``2Kt < 1e-6`` so the
    ``K → 0`` limit is smooth.  Complex ``t`` is accepted (for complex-step
    differentiation); its real part must be positive.
    """
    _check_K(K)
    t = np.asarray(t)
    if np.any(np.real(t) <= 0):
        raise ParameterError("psi_factor needs t > 0")
    x = 2.0 * K * t
    small = np.abs(x) < _SERIES_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = -np.expm1(-x) / (2.0 * K) if K > 0 else t
    # (1 − e^{−x})/x = 1 − x/2 + x²/6 − x³/24 + ...
    series = t * (1.0 - x / 2.0 + x**2 / 6.0 - x**3 / 24.0)
    out = np.where(small, series, closed)
    return out if out.ndim else out[()]


def psi_derivative(t, K):
    """``ψ'(t) = e^{−2Kt}``."""
    _check_K(K)
    return np.exp(-2.0 * K * np.asarray(t))


def hamilton_coefficient(t, K):
    """``1/ψ(t) = 2K/(1 − e^{−2Kt})``."""
    return 1.0 / psi_factor(t, K)


def elementary_inequality_report(K_values, t_values, tolerance=0.0):
    """Grid check of ``2K/(1 − e^{−2Kt}) ≤ 2K + 1/t``."""
    KK, TT = np.meshgrid(np.asarray(K_values, float), np.asarray(t_values, float), indexing="ij")
    margin = np.empty_like(KK)
    for i, K in enumerate(KK[:, 0]):
        margin[i] = 2 * K + 1 / TT[i] - hamilton_coefficient(TT[i], K)
    return HarnackReport.from_margins(
        "psi_elementary_bound",
        margin,
        np.stack([TT.ravel(), KK.ravel()], axis=-1),
        tolerance,
        notes=["location is (t, K)"],
    )


def sqrtk_coth(K, rho):
    """``√K·coth(√K ρ)`` with its ``K → 0`` limit ``1/ρ``."""
    rho = np.asarray(rho, dtype=float)
    if not K >= 0:
        raise ParameterError("K must be non-negative")
    z = math.sqrt(K) * rho
    with np.errstate(divide="ignore", invalid="ignore"):
        closed = math.sqrt(K) / np.tanh(z)
        series = 1.0 / rho + K * rho / 3.0 - K**2 * rho**3 / 45.0
    return np.where(z < 1e-4, series, closed)


# ---------------------------------------------------------------------------
# Li-Yau bounds
# ---------------------------------------------------------------------------


def li_yau_bound(t, m, alpha, D, E=0.0):
    """``(mα²/4t)[1 + Et + √((1 + Et)² + Dt²/m)]``.

    ``E = 0`` gives the compact-case bound.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("Li-Yau bounds need t > 0")
    a = 1.0 + E * t
    return m * alpha**2 / (4.0 * t) * (a + np.sqrt(a**2 + D * t**2 / m))


def li_yau_constants(cert, params, case, R=None, bundle=None, D_variant=None):
    """``(D, E)`` for ``case`` in ``compact``, ``complete`` or ``local``.

    The compact and local cases use the ``2B²/γ`` radicand; the complete
    case uses the larger of both radicands unless ``D_variant`` is given.
    """
    params.require_li_yau()
    if case == "compact":
        return constant_D(cert, params, D_variant or "compact"), 0.0
    if bundle is None:
        raise ParameterError(f"case {case!r} needs cutoff constants")
    if case == "complete":
        return constant_D(cert, params, D_variant or "safe"), bundle.C4 * (cert.K2 + math.sqrt(cert.K1))
    if case == "local":
        if R is None:
            raise ParameterError("the local case needs R")
        return constant_D(cert, params, D_variant or "compact"), constant_E(cert, params, R, bundle)
    raise ParameterError(f"unknown Li-Yau case {case!r}")


def compact_bound_expr():
    """The compact bound as a sympy expression in ``t, m, α, D`` (all positive)."""
    import sympy as sp

    t, m, a, D = sp.symbols("t m alpha D", positive=True)
    return m * a**2 / (4 * t) * (1 + sp.sqrt(1 + t**2 * D / m)), (t, m, a, D)


# ---------------------------------------------------------------------------
# static reduction
# ---------------------------------------------------------------------------


def static_pre_reduction(t, m, alpha, C4, K):
    """``(mα²/4t)[1 + C₄√K t + √((1 + C₄√K t)² + 4K²t²/(α−1)²)]``."""
    t = np.asarray(t, dtype=float)
    a = 1.0 + C4 * math.sqrt(K) * t
    return m * alpha**2 / (4 * t) * (a + np.sqrt(a**2 + 4 * K**2 * t**2 / (alpha - 1) ** 2))


def static_reduction(t, m, alpha, C4, K):
    """``(mα²/2t)[1 + C₄√K t + Kt/(α−1)]``."""
    t = np.asarray(t, dtype=float)
    return m * alpha**2 / (2 * t) * (1 + C4 * math.sqrt(K) * t + K * t / (alpha - 1))


def matching_gamma(t, alpha, C4, K):
    """The ``γ`` at which the static complete bound equals :func:`static_reduction` at ``t``.

    With ``A = B = 0`` the radicand is ``m(2K+γ)²/(α−1)²``; setting
    ``√((1+a)² + (2K+γ)²t²/(α−1)²) = 1 + a + 2Kt/(α−1)`` with
    ``a = C₄√K t`` and solving for ``γ ≥ 0`` gives this value.
    """
    a = 1.0 + C4 * math.sqrt(K) * t
    b = 2 * K * t / (alpha - 1)
    return (alpha - 1) / t * math.sqrt(b * (2 * a + b)) - 2 * K


# ---------------------------------------------------------------------------
# parabolic Harnack constant
# ---------------------------------------------------------------------------


def c7_constants(cert, params, D, E):
    """Proof-derived and displayed ``C₇``.

    Bounding the Li-Yau right-hand side by ``√(a²+b²) ≤ a + b`` and
    integrating along a path gives the rate
    ``C₇ = (mα/2)·E + (mα/4)·√(D/m)``.  The displayed constant
    ``E + √(D'/m)`` with ``D' = D/m`` is returned alongside for the record.
    """
    m, alpha = params.m, params.alpha
    proof = 0.5 * m * alpha * E + 0.25 * m * alpha * math.sqrt(D / m)
    displayed = E + math.sqrt(D / m / m)
    return proof, displayed


# ---------------------------------------------------------------------------
# algebraic lemma
# ---------------------------------------------------------------------------


def algebraic_lemma_margin(a, b, c, x, gamma):
    """``ax⁴ + bx² + cx + (b−γ)²/(4a) + c²/(4γ)`` (non-negative for ``a, γ > 0``)."""
    a, b, c, x, gamma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, x, gamma)))
    if np.any(a <= 0) or np.any(gamma <= 0):
        raise ParameterError("the algebraic lemma needs a > 0 and gamma > 0")
    return a * x**4 + b * x**2 + c * x + (b - gamma) ** 2 / (4 * a) + c**2 / (4 * gamma)


def algebraic_lemma_report(rng, n_samples=10000, tolerance=1e-12):
    """Random ``(a, b, c, x, γ)`` samples of the algebraic lemma."""
    a = rng.uniform(0.01, 10.0, n_samples)
    b = rng.uniform(-10.0, 10.0, n_samples)
    c = rng.uniform(-10.0, 10.0, n_samples)
    x = rng.uniform(-5.0, 5.0, n_samples)
    g = rng.uniform(0.01, 10.0, n_samples)
    margin = algebraic_lemma_margin(a, b, c, x, g)
    scale = 1.0 + np.abs(a * x**4) + np.abs(b * x**2) + (b - g) ** 2 / (4 * a) + c**2 / (4 * g)
    return HarnackReport.from_margins(
        "algebraic_lemma",
        margin / scale,
        np.stack([a, b, c, x, g], axis=-1),
        tolerance,
        notes=["margins are relative to the term magnitudes; location is (a, b, c, x, gamma)"],
    )
