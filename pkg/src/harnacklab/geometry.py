"""Time-dependent metrics and potentials on model charts.

Four chart kinds are supported: the circle, the flat torus, a truncated line
and the round sphere in hyperspherical (polar) coordinates.  Every callback
is vectorised over leading axes: a chart point array of shape ``(..., d)``
maps to scalars ``(...)``, covectors ``(..., d)``, tensors ``(..., d, d)``
and Christoffel arrays ``(..., d, d, d)`` indexed ``[k, i, j]`` for
``Γᵏᵢⱼ``.  Time is always a scalar.

Tensors carry lower indices in the chart basis unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from .errors import DegeneracyError, DomainError, ParameterError
from .symbolic import SymbolicField

# m = ∞ is carried as IEEE infinity but every formula branches on it
# explicitly, so no term is ever formed as x / (inf - n).
M_INF = math.inf

CIRCLE = "circle"
TORUS = "torus"
LINE = "line"
SPHERE = "sphere_polar"

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(64)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def is_infinite_dim(m):
    return m == M_INF


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise DomainError(f"expected chart points with last axis {dim}, got shape {x.shape}")
    return x


def _wrap(delta, period):
    """Signed displacement reduced to (-P/2, P/2]."""
    return delta - period * np.round(delta / period)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    """Chart descriptor with the analytic base metric g₀ of its model space.

    For ``sphere_polar`` the coordinates are ``(θ₁, ..., θₙ₋₁, φ)`` on the
    unit sphere Sⁿ; the polar angles are restricted to
    ``[theta_min, π - theta_min]`` to stay away from the coordinate
    singularities.
    """

    kind: str
    dim: int
    periods: tuple = ()
    interval: Optional[tuple] = None
    boundary: str = "periodic"
    theta_min: float = 0.05

    # -- construction -----------------------------------------------------

    @classmethod
    def circle(cls, period=2 * math.pi):
        if period <= 0:
            raise ParameterError("circle period must be positive")
        return cls(CIRCLE, 1, periods=(float(period),))

    @classmethod
    def torus(cls, periods):
        periods = tuple(float(p) for p in periods)
        if not periods or min(periods) <= 0:
            raise ParameterError("torus periods must be positive")
        return cls(TORUS, len(periods), periods=periods)

    @classmethod
    def line(cls, lo, hi, boundary="neumann"):
        if not hi > lo:
            raise ParameterError("line interval must satisfy lo < hi")
        if boundary not in ("neumann", "clamp"):
            raise ParameterError(f"unknown line boundary policy {boundary!r}")
        return cls(LINE, 1, interval=(float(lo), float(hi)), boundary=boundary)

    @classmethod
    def sphere_polar(cls, n=2, theta_min=0.05):
        if n < 2:
            raise ParameterError("sphere_polar needs n >= 2")
        if not 0 < theta_min < math.pi / 2:
            raise ParameterError("theta_min must lie in (0, π/2)")
        return cls(SPHERE, int(n), theta_min=float(theta_min), boundary="neumann")

    # -- regions ----------------------------------------------------------

    @property
    def periodic_axes(self):
        if self.kind in (CIRCLE, TORUS):
            return tuple(range(self.dim))
        if self.kind == SPHERE:
            return (self.dim - 1,)
        return ()

    def axis_period(self, axis):
        if self.kind in (CIRCLE, TORUS):
            return self.periods[axis]
        if self.kind == SPHERE and axis == self.dim - 1:
            return 2 * math.pi
        return None

    def contains(self, x):
        """Boolean mask of points inside the valid (singularity-free) region."""
        x = _as_points(x, self.dim)
        if self.kind in (CIRCLE, TORUS):
            return np.all(np.isfinite(x), axis=-1)
        if self.kind == LINE:
            lo, hi = self.interval
            return (x[..., 0] >= lo) & (x[..., 0] <= hi)
        polar = x[..., : self.dim - 1]
        lo, hi = self.theta_min, math.pi - self.theta_min
        return np.all((polar >= lo) & (polar <= hi), axis=-1)

    def radial_range(self):
        """Coordinate range of the first axis used by 1D reductions."""
        if self.kind in (CIRCLE, TORUS):
            return (0.0, self.periods[0])
        if self.kind == LINE:
            return self.interval
        return (self.theta_min, math.pi - self.theta_min)

    def reference_point(self, x1):
        """Embed first-axis values into full chart points.

        Remaining coordinates are parked at an equator (π/2 for the sphere's
        secondary polar angles, 0 otherwise), where rotationally symmetric
        data sees the radial profile only.
        """
        x1 = np.asarray(x1, dtype=float)
        pts = np.zeros(x1.shape + (self.dim,))
        pts[..., 0] = x1
        if self.kind == SPHERE:
            pts[..., 1 : self.dim - 1] = math.pi / 2
        return pts

    # -- base metric --------------------------------------------------------

    def _diag(self, x):
        """Diagonal entries of g₀ and D[i, j] = ∂ⱼ log g₀ᵢᵢ."""
        d = self.dim
        shape = x.shape[:-1]
        diag = np.ones(shape + (d,))
        dlog = np.zeros(shape + (d, d))
        if self.kind == SPHERE:
            s = np.sin(x[..., : d - 1])
            c = np.cos(x[..., : d - 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                cot = c / s
            for i in range(1, d):
                diag[..., i] = diag[..., i - 1] * s[..., i - 1] ** 2
                for j in range(i):
                    dlog[..., i, j] = 2.0 * cot[..., j]
        return diag, dlog

    def base_metric(self, x):
        x = _as_points(x, self.dim)
        diag, _ = self._diag(x)
        return diag[..., :, None] * np.eye(self.dim)

    def base_metric_grad(self, x):
        """``[k, i, j] = ∂ₖ g₀ᵢⱼ``."""
        x = _as_points(x, self.dim)
        diag, dlog = self._diag(x)
        d = self.dim
        # ∂ₖ g₀ᵢᵢ = g₀ᵢᵢ D[i, k]
        out = np.zeros(x.shape[:-1] + (d, d, d))
        for i in range(d):
            out[..., :, i, i] = diag[..., i, None] * dlog[..., i, :]
        return out

    def base_christoffel(self, x):
        """Analytic ``Γᵏᵢⱼ`` of g₀ (the same for every constant rescaling)."""
        x = _as_points(x, self.dim)
        diag, dlog = self._diag(x)
        d = self.dim
        eye = np.eye(d)
        # Γᵏᵢⱼ = ½(δₖⱼ D[k,i] + δₖᵢ D[k,j] − δᵢⱼ (gᵢᵢ/gₖₖ) D[i,k])
        term1 = np.einsum("kj,...ki->...kij", eye, dlog)
        term2 = np.einsum("ki,...kj->...kij", eye, dlog)
        ratio = diag[..., None, :] / diag[..., :, None]  # [k, i] = gᵢᵢ/gₖₖ
        dl_t = np.swapaxes(dlog, -1, -2)  # [k, i] = D[i, k]
        term3 = np.einsum("ij,...ki->...kij", eye, ratio * dl_t)
        return 0.5 * (term1 + term2 - term3)

    def base_ricci(self, x):
        x = _as_points(x, self.dim)
        if self.kind == SPHERE:
            return (self.dim - 1) * self.base_metric(x)
        return np.zeros(x.shape[:-1] + (self.dim, self.dim))

    # -- base geometry ------------------------------------------------------

    def embed(self, x):
        """Unit-sphere embedding in R^{n+1} (sphere charts only)."""
        x = _as_points(x, self.dim)
        d = self.dim
        out = np.empty(x.shape[:-1] + (d + 1,))
        prod = np.ones(x.shape[:-1])
        for i in range(d - 1):
            out[..., i] = prod * np.cos(x[..., i])
            prod = prod * np.sin(x[..., i])
        out[..., d - 1] = prod * np.cos(x[..., d - 1])
        out[..., d] = prod * np.sin(x[..., d - 1])
        return out

    def unembed(self, y, like=None):
        """Inverse of :meth:`embed`; angles left undefined at a pole copy ``like``."""
        y = np.asarray(y, dtype=float)
        d = self.dim
        x = np.empty(y.shape[:-1] + (d,))
        for i in range(d - 1):
            tail = np.sqrt(np.sum(y[..., i + 1 :] ** 2, axis=-1))
            x[..., i] = np.arctan2(tail, y[..., i])
        x[..., d - 1] = np.arctan2(y[..., d], y[..., d - 1])
        if like is not None:
            like = np.asarray(like, dtype=float)
            for i in range(d - 1):
                tail = np.sqrt(np.sum(y[..., i + 1 :] ** 2, axis=-1))
                pole = tail < 1e-13
                x[..., i + 1 :] = np.where(pole[..., None], like[..., i + 1 :], x[..., i + 1 :])
        return x

    def base_distance(self, x, y):
        x = _as_points(x, self.dim)
        y = _as_points(y, self.dim)
        if self.kind == LINE:
            return np.abs(x[..., 0] - y[..., 0])
        if self.kind in (CIRCLE, TORUS):
            delta = _wrap(y - x, np.asarray(self.periods))
            return np.sqrt(np.sum(delta**2, axis=-1))
        u, v = self.embed(x), self.embed(y)
        diff = np.sqrt(np.sum((u - v) ** 2, axis=-1))
        summ = np.sqrt(np.sum((u + v) ** 2, axis=-1))
        return 2.0 * np.arctan2(diff, summ)

    def base_geodesic(self, x, y):
        """Constant-speed g₀-geodesic ``τ ↦ γ(τ)`` on ``[0, 1]`` (vectorised in τ)."""
        x = _as_points(x, self.dim).reshape(self.dim)
        y = _as_points(y, self.dim).reshape(self.dim)
        if self.kind in (CIRCLE, TORUS):
            delta = _wrap(y - x, np.asarray(self.periods))
        elif self.kind == LINE:
            delta = y - x
        else:
            u, v = self.embed(x), self.embed(y)
            theta = float(self.base_distance(x, y))
            if theta < 1e-15:
                return lambda tau: np.broadcast_to(x, np.shape(tau) + (self.dim,)).copy()
            if math.pi - theta < 1e-9:
                raise DomainError("antipodal points have no unique minimal geodesic")

            def sphere_path(tau):
                tau = np.asarray(tau, dtype=float)[..., None]
                p = (np.sin((1 - tau) * theta) * u + np.sin(tau * theta) * v) / math.sin(theta)
                like = np.where(tau < 0.5, x, y)
                return self.unembed(p, like=like)

            return sphere_path

        def flat_path(tau):
            tau = np.asarray(tau, dtype=float)[..., None]
            return x + tau * delta

        return flat_path

    def wrap_delta(self, delta):
        """Reduce coordinate differences along periodic axes."""
        delta = np.array(delta, dtype=float)
        for ax in self.periodic_axes:
            delta[..., ax] = _wrap(delta[..., ax], self.axis_period(ax))
        return delta


# ---------------------------------------------------------------------------
# metric families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifoldFamily:
    """A chart with time-dependent metric ``g(t)`` and rate ``h = ½∂ₜg``.

    ``christoffel`` and ``ricci`` are analytic closures.  ``metric_rate_grad``
    returns ``[k, i, j] = ∂ₖhᵢⱼ`` when known analytically; otherwise
    consumers fall back to finite differences.  ``scale`` is set for
    conformal families ``g(t) = c(t)·g₀`` and ``line_density`` for 1D
    families ``g = a(t, x)² dx²``.
    """

    chart: Chart
    metric: Callable
    metric_rate: Callable
    ricci: Callable
    christoffel: Callable
    metric_rate_grad: Optional[Callable] = None
    scale: Optional[Callable] = None
    scale_rate: Optional[Callable] = None
    line_density: Optional[Callable] = None
    line_density_rate: Optional[Callable] = None
    t_window: tuple = (-math.inf, math.inf)
    static: bool = False
    name: str = ""
    params: dict = field(default_factory=dict)

    @property
    def dim_n(self):
        return self.chart.dim

    @property
    def dim(self):
        return self.chart.dim

    def inverse_metric(self, t, x):
        return np.linalg.inv(self.metric(t, x))

    def check_time(self, t):
        lo, hi = self.t_window
        if not lo <= t <= hi:
            raise DomainError(f"t={t} lies outside the family's validity window {self.t_window}")

    # -- constructors -------------------------------------------------------

    @classmethod
    def conformal(cls, chart, c, dc=None, name="", t_window=(-math.inf, math.inf), params=None):
        """``g(t) = c(t)·g₀`` with ``c > 0``; ``dc=None`` means static."""
        static = dc is None
        if static:
            c0 = float(c(0.0)) if callable(c) else float(c)
            c = lambda t, _c=c0: _c  # noqa: E731
            dc = lambda t: 0.0  # noqa: E731

        def metric(t, x):
            return c(t) * chart.base_metric(x)

        def metric_rate(t, x):
            return 0.5 * dc(t) * chart.base_metric(x)

        def metric_rate_grad(t, x):
            return 0.5 * dc(t) * chart.base_metric_grad(x)

        def ricci(t, x):
            return chart.base_ricci(x)

        def christoffel(t, x):
            return chart.base_christoffel(x)

        return cls(
            chart=chart,
            metric=metric,
            metric_rate=metric_rate,
            ricci=ricci,
            christoffel=christoffel,
            metric_rate_grad=metric_rate_grad,
            scale=c,
            scale_rate=dc,
            t_window=t_window,
            static=static,
            name=name,
            params=dict(params or {}),
        )

    @classmethod
    def one_dimensional(cls, chart, a, a_x, a_t=None, a_xt=None, name="", t_window=(-math.inf, math.inf)):
        """``g = a(t, x)² dx²`` on a circle or line chart.

        ``a``, ``a_x``, ``a_t``, ``a_xt`` take ``(t, x1)`` with ``x1`` the
        coordinate array; omitted time derivatives mean a static family.
        """
        if chart.dim != 1:
            raise ParameterError("one_dimensional families need a 1D chart")
        static = a_t is None
        if static:
            a_t = lambda t, s: np.zeros_like(s)  # noqa: E731
            a_xt = a_t

        def metric(t, x):
            s = _as_points(x, 1)[..., 0]
            return (a(t, s) ** 2)[..., None, None]

        def metric_rate(t, x):
            s = _as_points(x, 1)[..., 0]
            return (a(t, s) * a_t(t, s))[..., None, None]

        def metric_rate_grad(t, x):
            s = _as_points(x, 1)[..., 0]
            return (a_x(t, s) * a_t(t, s) + a(t, s) * a_xt(t, s))[..., None, None, None]

        def christoffel(t, x):
            s = _as_points(x, 1)[..., 0]
            return (a_x(t, s) / a(t, s))[..., None, None, None]

        def ricci(t, x):
            s = _as_points(x, 1)
            return np.zeros(s.shape[:-1] + (1, 1))

        return cls(
            chart=chart,
            metric=metric,
            metric_rate=metric_rate,
            ricci=ricci,
            christoffel=christoffel,
            metric_rate_grad=metric_rate_grad,
            line_density=a,
            line_density_rate=a_t,
            t_window=t_window,
            static=static,
            name=name,
        )


def static_flat(chart, c=1.0):
    if chart.kind == SPHERE:
        raise ParameterError("the sphere chart has no flat metric")
    return ManifoldFamily.conformal(chart, c, None, name="static_flat", params={"c": c})


def round_sphere(n=2, radius=1.0, theta_min=0.05):
    return ManifoldFamily.conformal(
        Chart.sphere_polar(n, theta_min), radius**2, None, name="round_sphere", params={"radius": radius}
    )


def conformal_exponential(chart, rate):
    """``g(t) = e^{2·rate·t} g₀``, so ``h = rate·g``."""
    return ManifoldFamily.conformal(
        chart,
        lambda t: math.exp(2 * rate * t),
        lambda t: 2 * rate * math.exp(2 * rate * t),
        name="conformal_exponential",
        params={"rate": rate},
    )


def ricci_flow_sphere(n=2, r0=1.0, theta_min=0.05):
    """Round-sphere Ricci flow ``g(t) = (r₀² − 2(n−1)t) ĝ``, valid while positive."""
    k = 2.0 * (n - 1)
    t_end = r0**2 / k
    return ManifoldFamily.conformal(
        Chart.sphere_polar(n, theta_min),
        lambda t: r0**2 - k * t,
        lambda t: -k,
        name="ricci_flow_sphere",
        t_window=(-math.inf, t_end * (1 - 1e-12)),
        params={"n": n, "r0": r0},
    )


def backward_ricci_flow_sphere(n=2, r0=1.0, theta_min=0.05):
    """``∂ₜg = 2 Ric`` on the round sphere: ``g(t) = (r₀² + 2(n−1)t) ĝ``."""
    k = 2.0 * (n - 1)
    return ManifoldFamily.conformal(
        Chart.sphere_polar(n, theta_min),
        lambda t: r0**2 + k * t,
        lambda t: k,
        name="backward_ricci_flow_sphere",
        t_window=(-(r0**2) / k * (1 - 1e-12), math.inf),
        params={"n": n, "r0": r0},
    )


def shrinking_sphere(c, dc, n=2, theta_min=0.05, t_window=(-math.inf, math.inf)):
    """Sphere with a user conformal factor ``g(t) = c(t) ĝ``."""
    return ManifoldFamily.conformal(
        Chart.sphere_polar(n, theta_min), c, dc, name="shrinking_sphere", t_window=t_window
    )


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialFamily:
    """Potential ``φ(t, x)`` with derivative callbacks tied to one family.

    ``grad_phi`` is index-raised by ``g(t)``; ``dphi`` is the covector ``∂φ``;
    ``hess_phi`` is the covariant Hessian.  ``grad_dphi_dt`` (covector
    ``∂ₗ∂ₜφ``) is optional.
    """

    phi: Callable
    dphi: Callable
    grad_phi: Callable
    hess_phi: Callable
    dphi_dt: Callable
    grad_dphi_dt: Optional[Callable] = None
    is_zero: bool = False
    static: bool = True
    name: str = ""

    @classmethod
    def zero(cls, family):
        d = family.dim

        def scalar(t, x):
            return np.zeros(_as_points(x, d).shape[:-1])

        def vector(t, x):
            return np.zeros(_as_points(x, d).shape)

        def matrix(t, x):
            return np.zeros(_as_points(x, d).shape[:-1] + (d, d))

        return cls(scalar, vector, vector, matrix, scalar, vector, is_zero=True, static=True, name="zero")

    @classmethod
    def from_parts(cls, family, phi, dphi, ddphi, dphi_dt, grad_dphi_dt=None, static=False, name=""):
        """Assemble from coordinate partials (``ddphi`` = plain second partials)."""
        d = family.dim

        def grad_phi(t, x):
            x = _as_points(x, d)
            return np.einsum("...ij,...j->...i", family.inverse_metric(t, x), dphi(t, x))

        def hess_phi(t, x):
            x = _as_points(x, d)
            gamma = family.christoffel(t, x)
            return ddphi(t, x) - np.einsum("...kij,...k->...ij", gamma, dphi(t, x))

        return cls(phi, dphi, grad_phi, hess_phi, dphi_dt, grad_dphi_dt, is_zero=False, static=static, name=name)

    @classmethod
    def from_expr(cls, expr, family, name=""):
        """Potential from a sympy expression in ``t, x0, ..., x{d-1}``."""
        f = expr if isinstance(expr, SymbolicField) else SymbolicField(expr, family.dim)
        if f.is_zero:
            return cls.zero(family)
        return cls.from_parts(
            family,
            f.value,
            f.partial,
            f.second_partial,
            f.dt,
            f.partial_dt,
            static=f.is_static,
            name=name or f.name,
        )

    @classmethod
    def quadratic(cls, family, a=1.0, center=0.0):
        """``φ = a(x₁ − center)²/2`` in the first coordinate (Ornstein–Uhlenbeck)."""
        import sympy as sp

        x0 = sp.Symbol("x0", real=True)
        return cls.from_expr(sp.Float(a) * (x0 - center) ** 2 / 2, family, name=f"quadratic({a})")

    @classmethod
    def cosine(cls, family, amplitude=1.0, wavenumber=1.0):
        import sympy as sp

        x0 = sp.Symbol("x0", real=True)
        return cls.from_expr(
            sp.Float(amplitude) * sp.cos(sp.Float(wavenumber) * x0), family, name=f"cosine({amplitude})"
        )

    @classmethod
    def table(cls, family, xs, values, periodic=False):
        """Static radial potential interpolated by a cubic spline in the first coordinate."""
        d = family.dim
        bc = "periodic" if periodic else "not-a-knot"
        spline = CubicSpline(np.asarray(xs, float), np.asarray(values, float), bc_type=bc)
        d1, d2 = spline.derivative(1), spline.derivative(2)

        def phi(t, x):
            return spline(_as_points(x, d)[..., 0])

        def dphi(t, x):
            x = _as_points(x, d)
            out = np.zeros(x.shape)
            out[..., 0] = d1(x[..., 0])
            return out

        def ddphi(t, x):
            x = _as_points(x, d)
            out = np.zeros(x.shape[:-1] + (d, d))
            out[..., 0, 0] = d2(x[..., 0])
            return out

        def zero_scalar(t, x):
            return np.zeros(_as_points(x, d).shape[:-1])

        def zero_vector(t, x):
            return np.zeros(_as_points(x, d).shape)

        return cls.from_parts(family, phi, dphi, ddphi, zero_scalar, zero_vector, static=True, name="table")

    @classmethod
    def perelman_compensated(cls, family, base=None, t0=0.0):
        """``φ = φ₀ + ½ log(det g(t)/det g(t₀))`` so that ``∂ₜφ = Tr_g h``.

        Under this constraint the weighted measure ``e^{-φ} dv_{g(t)}`` does
        not move.  Only conformal families are supported (the correction is
        then constant in space).
        """
        if family.scale is None:
            raise ParameterError("perelman_compensated needs a conformal family")
        base = base or cls.zero(family)
        n = family.dim
        c, dc = family.scale, family.scale_rate
        c0 = c(t0)

        def phi(t, x):
            return base.phi(t, x) + 0.5 * n * math.log(c(t) / c0)

        def dphi_dt(t, x):
            return base.dphi_dt(t, x) + 0.5 * n * dc(t) / c(t)

        grad_dphi_dt = base.grad_dphi_dt

        return cls(
            phi,
            base.dphi,
            base.grad_phi,
            base.hess_phi,
            dphi_dt,
            grad_dphi_dt,
            is_zero=False,
            static=False,
            name=f"perelman[{base.name}]",
        )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _check_spd(g, where):
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegeneracyError(f"metric is not positive definite at {where}") from None
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=1e-12, atol=1e-14):
        raise DegeneracyError(f"metric is not symmetric at {where}")


def curvature_oracle(family, t, x, step=1e-3):
    """Ricci tensor from finite differences of the metric components alone.

    First and second partials of ``g`` come from centred differences with
    spacing ``step``; Christoffel symbols and their derivatives are then
    formed algebraically, so no analytic closure enters.
    """
    chart = family.chart
    d = chart.dim
    x = _as_points(x, d).reshape(d)
    eps = float(step)
    e = np.eye(d) * eps
    stencil = [x]
    for k in range(d):
        stencil += [x + e[k], x - e[k]]
        for l in range(k + 1, d):
            stencil += [x + e[k] + e[l], x + e[k] - e[l], x - e[k] + e[l], x - e[k] - e[l]]
    stencil = np.array(stencil)
    if not np.all(chart.contains(stencil)):
        raise DomainError(f"curvature stencil of width {eps} leaves the chart at {x}")

    def g(p):
        val = np.asarray(family.metric(t, p), dtype=float).reshape(d, d)
        _check_spd(val, p)
        return val

    g0 = g(x)
    plus = [g(x + e[k]) for k in range(d)]
    minus = [g(x - e[k]) for k in range(d)]
    dg = np.array([(plus[k] - minus[k]) / (2 * eps) for k in range(d)])  # [k,i,j]
    ddg = np.empty((d, d, d, d))  # [k,l,i,j]
    for k in range(d):
        ddg[k, k] = (plus[k] - 2 * g0 + minus[k]) / eps**2
        for l in range(k + 1, d):
            val = (
                g(x + e[k] + e[l]) - g(x + e[k] - e[l]) - g(x - e[k] + e[l]) + g(x - e[k] - e[l])
            ) / (4 * eps**2)
            ddg[k, l] = ddg[l, k] = val

    ginv = np.linalg.inv(g0)
    # lowered Christoffel Γ_lij = ½(∂ᵢg_jl + ∂ⱼg_il − ∂ₗg_ij)
    low = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    gamma = np.einsum("kl,lij->kij", ginv, low)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)  # [m,k,l]
    dlow = 0.5 * (
        np.einsum("mijl->mlij", ddg) + np.einsum("mjil->mlij", ddg) - ddg
    )  # [m,l,i,j] = ∂ₘ Γ_lij
    dgamma = np.einsum("mkl,lij->mkij", dginv, low) + np.einsum("kl,mlij->mkij", ginv, dlow)
    ric = (
        np.einsum("kkij->ij", dgamma)
        - np.einsum("jkik->ij", dgamma)
        + np.einsum("kkp,pij->ij", gamma, gamma)
        - np.einsum("kjp,pik->ij", gamma, gamma)
    )
    return 0.5 * (ric + ric.T)


def bakry_emery_ricci(family, pot, m, t, x):
    """``Ric + ∇²φ − dφ⊗dφ/(m−n)``; the last term is dropped for ``m = M_INF``."""
    n = family.dim_n
    x = _as_points(x, family.dim)
    ric = family.ricci(t, x) + pot.hess_phi(t, x)
    if is_infinite_dim(m):
        return ric
    if m < n:
        raise ParameterError(f"m={m} must be at least n={n}")
    if m == n:
        if not pot.is_zero:
            raise ParameterError("m = n is only allowed with a zero potential")
        return ric
    dphi = pot.dphi(t, x)
    return ric - np.einsum("...i,...j->...ij", dphi, dphi) / (m - n)


def _line_arc(family, t, x, y):
    """Integration limits along the metrically shorter arc of a 1D chart."""
    chart = family.chart
    a = family.line_density
    x, y = float(x), float(y)
    if chart.kind == LINE:
        return (x, y) if x <= y else (y, x)
    period = chart.periods[0]
    delta = (y - x) % period
    fwd = integrate.quad(lambda s: a(t, np.asarray(s)), x, x + delta, epsabs=1e-14, epsrel=1e-13)[0]
    total = integrate.quad(lambda s: a(t, np.asarray(s)), 0.0, period, epsabs=1e-14, epsrel=1e-13)[0]
    if fwd <= total - fwd:
        return (x, x + delta)
    return (y, y + period - delta)


def distance(family, t, x, y):
    """Geodesic distance ``d_t(x, y)`` under ``g(t)``."""
    chart = family.chart
    if family.scale is not None:
        return math.sqrt(family.scale(t)) * chart.base_distance(x, y)
    if family.line_density is not None:
        xs = np.atleast_1d(np.asarray(x, float).reshape(-1))
        ys = np.atleast_1d(np.asarray(y, float).reshape(-1))
        out = []
        for xi, yi in np.broadcast(xs, ys):
            lo, hi = _line_arc(family, t, xi, yi)
            out.append(
                integrate.quad(
                    lambda s: family.line_density(t, np.asarray(s)), lo, hi, epsabs=1e-14, epsrel=1e-13
                )[0]
            )
        out = np.array(out)
        return out.reshape(np.broadcast(np.asarray(x), np.asarray(y)).shape) if out.size > 1 else out[0]
    raise ParameterError("distance needs a conformal or one-dimensional family")


def _geodesic(family, t, x, y):
    chart = family.chart
    if family.scale is not None or chart.kind != CIRCLE:
        return chart.base_geodesic(x, y)
    lo, hi = _line_arc(family, t, float(np.ravel(x)[0]), float(np.ravel(y)[0]))
    return lambda tau: (lo + np.asarray(tau, float) * (hi - lo))[..., None]


def distance_rate(family, t, x, y, fd_step=1e-6):
    """``∂ₜ d_t(x, y) = ∫ h(S, S) ds`` along the ``g(t)``-minimal geodesic.

    The integral is evaluated by Gauss–Legendre quadrature on the chart path,
    with ``h(γ', γ')/|γ'|`` as integrand so the parameterisation drops out.
    """
    path = _geodesic(family, t, x, y)
    tau = _GAUSS_X
    pts = path(tau)
    vel = family.chart.wrap_delta(path(tau + fd_step) - path(tau - fd_step)) / (2 * fd_step)
    g = family.metric(t, pts)
    h = family.metric_rate(t, pts)
    speed2 = np.einsum("...i,...ij,...j->...", vel, g, vel)
    if np.all(speed2 < 1e-300):
        return 0.0
    hss = np.einsum("...i,...ij,...j->...", vel, h, vel)
    integrand = np.where(speed2 > 0, hss / np.sqrt(np.maximum(speed2, 1e-300)), 0.0)
    return float(np.dot(_GAUSS_W, integrand))


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------


class CutoffProfile:
    """C² radial bump ``η`` with η = 1 on [0, 1] and η = 0 on [2, ∞).

    On [1, 2] (with ``s = r − 1``) the profile is the quartic spline
    ``1 − 8s³(1 − s)`` for ``s ≤ ½`` and ``8s(1 − s)³`` for ``s ≥ ½``.  It is
    point-symmetric about ``s = ½`` and matches value, slope and curvature at
    both ends and at the knot.  ``C1`` bounds ``|η'|²/η`` and ``C2`` bounds
    ``−η''``; both are measured on construction.
    """

    def __init__(self, grid_points=200001):
        self.C1, self.C2 = self._certify(grid_points)

    @staticmethod
    def _pieces(r):
        s = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
        left = s <= 0.5
        val = np.where(left, 1 - 8 * s**3 * (1 - s), 8 * s * (1 - s) ** 3)
        d1 = np.where(left, -8 * s**2 * (3 - 4 * s), 8 * (1 - s) ** 2 * (1 - 4 * s))
        d2 = np.where(left, -48 * s + 96 * s**2, -48 * (1 - s) + 96 * (1 - s) ** 2)
        return val, d1, d2

    def __call__(self, r):
        return self._pieces(r)[0]

    def d1(self, r):
        return self._pieces(r)[1]

    def d2(self, r):
        return self._pieces(r)[2]

    def _certify(self, n):
        r = np.linspace(1.0, 2.0, n)
        val, d1, d2 = self._pieces(r)
        mask = val > 1e-12
        ratio = d1[mask] ** 2 / val[mask]
        i = int(np.argmax(ratio))
        c1 = float(ratio[i])
        rr = r[mask][i]
        res = optimize.minimize_scalar(
            lambda q: -(self.d1(q) ** 2) / self(q),
            bounds=(max(1.0, rr - 1e-4), min(2.0 - 1e-9, rr + 1e-4)),
            method="bounded",
            options={"xatol": 1e-14},
        )
        c1 = max(c1, float(-res.fun))
        c2 = float(max(0.0, -d2.min()))
        # round up so the constants bound the sampled values strictly
        return c1 * (1 + 1e-12), c2 * (1 + 1e-12)

    def verify(self, r=None):
        """Check the five defining properties on a dense grid; returns a dict of bools."""
        if r is None:
            r = np.linspace(0.0, 3.0, 300001)
        val, d1, d2 = self._pieces(r)
        mask = val > 1e-12
        return {
            "plateau": bool(np.all(val[r <= 1.0] == 1.0)),
            "support": bool(np.all(val[r >= 2.0] == 0.0)),
            "range": bool(np.all((val >= 0.0) & (val <= 1.0))),
            "monotone": bool(np.all(d1 <= 0.0)),
            "gradient_bound": bool(np.all(d1[mask] ** 2 <= self.C1 * val[mask])),
            "curvature_bound": bool(np.all(d2 >= -self.C2)),
        }


def cutoff_eta(C1_target=None, C2_target=None, grid_points=200001):
    """Return the fixed cutoff profile with its certified constants.

    The targets are optional; ``profile.meets_targets`` records whether the
    certified ``C1``, ``C2`` do not exceed them.
    """
    prof = CutoffProfile(grid_points)
    ok = True
    if C1_target is not None:
        ok &= prof.C1 <= C1_target
    if C2_target is not None:
        ok &= prof.C2 <= C2_target
    prof.meets_targets = bool(ok)
    return prof
