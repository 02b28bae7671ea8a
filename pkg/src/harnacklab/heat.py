"""Heat flow ``∂ₜu = Lu`` for the time-dependent Witten Laplacian on 1D reductions.

Every supported chart is reduced to its first coordinate: circle and torus
data are periodic in ``x₁``, line data live on a truncated interval, and
sphere data are rotationally symmetric in the first polar angle.  For such
data the operator takes the flux form

    Lu = ρ⁻¹ ∂₁(ρ κ ∂₁u),    ρ = e^{-φ} √det g,   κ = g¹¹,

evaluated at the chart's reference point.  The finite-volume discretisation
below keeps the weighted measure ``ρ V`` exactly: the discrete operator is
symmetric with respect to it and annihilates constants, so the weighted mass
is conserved whenever ``ρ`` is time independent.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, linalg, sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .errors import ParameterError, PositivityError, ShapeError, StabilityError, TruncationError
from .geometry import CIRCLE, LINE, SPHERE, TORUS
from .symbolic import SymbolicField

PERIODIC = "periodic"
NODES = "nodes"
POLAR_CELLS = "polar_cells"

SCHEMES = ("implicit_euler", "crank_nicolson", "explicit")

BINARY_MAGIC = b"HLFIELD\x00"
BINARY_VERSION = 1
_HEADER = struct.Struct("<8sIIQQdddd")


# ---------------------------------------------------------------------------
# grids and the discrete operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    """Uniform lattice on the reduced coordinate.

    ``layout`` is ``periodic`` (circle, torus), ``nodes`` (end nodes on the
    boundary, half cells there) or ``polar_cells`` (cell centres covering the
    whole polar range ``(0, π)``, with closed faces at the poles).
    """

    chart: object
    x: np.ndarray
    faces: np.ndarray
    volumes: np.ndarray
    dx: float
    layout: str
    boundary: str

    @property
    def n(self):
        return len(self.x)

    @property
    def periodic(self):
        return self.layout == PERIODIC

    def points(self, x1=None):
        return self.chart.reference_point(self.x if x1 is None else x1)

    def interior(self, width=1):
        """Mask of nodes with a full centred stencil of the given half-width."""
        mask = np.ones(self.n, dtype=bool)
        if not self.periodic:
            mask[:width] = False
            mask[self.n - width :] = False
        return mask

    def in_chart(self):
        """Mask of nodes inside the chart's singularity-free region."""
        return np.asarray(self.chart.contains(self.points()), dtype=bool)

    def to_dict(self):
        return {
            "layout": self.layout,
            "boundary": self.boundary,
            "n_x": self.n,
            "dx": self.dx,
            "x_range": [float(self.x[0]), float(self.x[-1])],
        }


def make_grid1d(family, n_x, layout=None):
    """Build the reduced lattice for ``family``'s chart.

    Sphere charts default to the ``nodes`` layout on the pole-excluding band
    (Neumann walls at ``θ_min`` and ``π − θ_min``); ``polar_cells`` covers the
    whole sphere instead.
    """
    chart = family.chart
    n_x = int(n_x)
    if n_x < 3:
        raise ParameterError("need at least 3 grid nodes")
    if chart.kind in (CIRCLE, TORUS):
        if layout not in (None, PERIODIC):
            raise ParameterError(f"layout {layout!r} is not available on a periodic chart")
        period = chart.periods[0]
        dx = period / n_x
        x = np.arange(n_x) * dx
        return Grid1D(chart, x, x + 0.5 * dx, np.full(n_x, dx), dx, PERIODIC, PERIODIC)
    if chart.kind == SPHERE and layout == POLAR_CELLS:
        dx = math.pi / n_x
        x = (np.arange(n_x) + 0.5) * dx
        faces = np.arange(n_x + 1) * dx
        return Grid1D(chart, x, faces, np.full(n_x, dx), dx, POLAR_CELLS, "closed")
    if layout not in (None, NODES):
        raise ParameterError(f"unknown layout {layout!r}")
    lo, hi = chart.radial_range()
    x = np.linspace(lo, hi, n_x)
    dx = (hi - lo) / (n_x - 1)
    vol = np.full(n_x, dx)
    vol[0] = vol[-1] = 0.5 * dx
    boundary = chart.boundary if chart.kind == LINE else "neumann"
    return Grid1D(chart, x, 0.5 * (x[1:] + x[:-1]), vol, dx, NODES, boundary)


def _log_weight(family, pot, t, pts):
    """``log ρ`` and ``κ`` at chart points (diagonal metrics)."""
    g = family.metric(t, pts)
    diag = np.diagonal(g, axis1=-2, axis2=-1)
    with np.errstate(divide="ignore"):
        log_det = np.sum(np.log(diag), axis=-1)
    return -pot.phi(t, pts) + 0.5 * log_det, 1.0 / diag[..., 0]


def node_density(family, pot, t, grid):
    """``ρ = e^{-φ}√det g`` at the nodes."""
    log_rho, _ = _log_weight(family, pot, t, grid.points())
    return np.exp(log_rho)


def metric_coefficient(family, t, grid, x1=None):
    """``κ = g¹¹`` at nodes (or at ``x1``)."""
    g = family.metric(t, grid.points(x1))
    return 1.0 / g[..., 0, 0]


@dataclass(frozen=True)
class Operator1D:
    """Tridiagonal ``L``: ``(Lu)ᵢ = lowerᵢ u_{i−1} + diagᵢ uᵢ + upperᵢ u_{i+1}``."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rho: np.ndarray
    face_weight: np.ndarray
    periodic: bool

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        if self.periodic:
            out = out + self.lower * np.roll(u, 1) + self.upper * np.roll(u, -1)
        else:
            out[1:] += self.lower[1:] * u[:-1]
            out[:-1] += self.upper[:-1] * u[1:]
        return out

    def shifted_matrix(self, theta_dt):
        """Sparse ``I − θΔt·L``."""
        n = len(self.diag)
        a = sparse.diags(
            [-theta_dt * self.lower[1:], 1.0 - theta_dt * self.diag, -theta_dt * self.upper[:-1]],
            [-1, 0, 1],
            shape=(n, n),
            format="lil",
        )
        if self.periodic:
            a[0, n - 1] = -theta_dt * self.lower[0]
            a[n - 1, 0] = -theta_dt * self.upper[n - 1]
        return a.tocsc()

    def solve_shifted(self, theta_dt, rhs):
        """Solve ``(I − θΔt·L) v = rhs``."""
        if self.periodic:
            return splu(self.shifted_matrix(theta_dt)).solve(rhs)
        n = len(self.diag)
        ab = np.zeros((3, n))
        ab[0, 1:] = -theta_dt * self.upper[:-1]
        ab[1] = 1.0 - theta_dt * self.diag
        ab[2, :-1] = -theta_dt * self.lower[1:]
        return linalg.solve_banded((1, 1), ab, rhs)


def assemble(family, pot, t, grid):
    """Finite-volume operator at time ``t``."""
    log_rho, _ = _log_weight(family, pot, t, grid.points())
    log_rho_f, kappa_f = _log_weight(family, pot, t, grid.points(grid.faces))
    rho = np.exp(log_rho)
    w = np.exp(log_rho_f) * kappa_f
    scale = 1.0 / (rho * grid.volumes * grid.dx)
    n = grid.n
    if grid.periodic:
        w_right = w
        w_left = np.roll(w, 1)
    elif grid.layout == POLAR_CELLS:
        w_left, w_right = w[:-1], w[1:]
    else:
        w_left = np.concatenate([[0.0], w])
        w_right = np.concatenate([w, [0.0]])
    lower = w_left * scale
    upper = w_right * scale
    diag = -(lower + upper)
    if grid.boundary == "clamp":
        for i in (0, n - 1):
            lower[i] = upper[i] = diag[i] = 0.0
    return Operator1D(lower, diag, upper, rho, w, grid.periodic)


def witten_apply(u_slice, family, pot, t, grid=None):
    """Second-order discretisation of ``Lu`` on a reduced slice."""
    u = np.asarray(u_slice, dtype=float)
    if u.ndim != 1:
        raise ShapeError("witten_apply expects a 1D slice")
    if grid is None:
        grid = make_grid1d(family, len(u))
    if len(u) != grid.n:
        raise ShapeError(f"slice has {len(u)} values but the grid has {grid.n} nodes")
    return assemble(family, pot, t, grid).apply(u)


def weighted_inner(u, v, family, pot, t, grid):
    """``Σ uᵢ vᵢ ρᵢ Vᵢ``."""
    return float(np.sum(np.asarray(u) * np.asarray(v) * node_density(family, pot, t, grid) * grid.volumes))


def dirichlet_form(u, v, family, pot, t, grid):
    """Discrete ``∫⟨∇u, ∇v⟩ dμ`` from face differences."""
    op = assemble(family, pot, t, grid)
    u, v = np.asarray(u, float), np.asarray(v, float)
    if grid.periodic:
        du, dv = np.roll(u, -1) - u, np.roll(v, -1) - v
    else:
        du, dv = np.diff(u), np.diff(v)
        if grid.layout == POLAR_CELLS:
            du = np.concatenate([[0.0], du, [0.0]])
            dv = np.concatenate([[0.0], dv, [0.0]])
    return float(np.sum(op.face_weight * du * dv) / grid.dx)


# ---------------------------------------------------------------------------
# solution fields
# ---------------------------------------------------------------------------


@dataclass
class SpaceTimeField:
    """Positive solution values ``u[k, i]`` at ``times[k]`` and nodes ``grid.x[i]``.

    ``t_origin`` is the time at which the solution starts; Harnack bounds use
    ``τ = t − t_origin``.  ``analytic`` is set when the values come from a
    closed-form solution, in which case derived fields are exact.
    """

    times: np.ndarray
    grid: Grid1D
    u: np.ndarray
    family: object
    pot: object
    scheme: str = "implicit_euler"
    dt: float = 0.0
    t_origin: float = 0.0
    analytic: Optional[SymbolicField] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (len(self.times), self.grid.n):
            raise ShapeError(f"u has shape {self.u.shape}, expected {(len(self.times), self.grid.n)}")

    @property
    def x(self):
        return self.grid.x

    @property
    def sup_bound_A(self):
        return float(np.max(self.u))

    @property
    def n_t(self):
        return len(self.times)

    def time_index(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"t={t} is not a stored time level")
        return k

    def spline(self, k):
        """Cubic spline of slice ``k`` in the reduced coordinate."""
        x, u = self.grid.x, self.u[k]
        if self.grid.periodic:
            period = self.grid.chart.periods[0]
            return CubicSpline(np.append(x, x[0] + period), np.append(u, u[0]), bc_type="periodic")
        return CubicSpline(x, u)

    def value_at(self, k, x1):
        x1 = np.asarray(x1, dtype=float)
        if self.grid.periodic:
            x1 = np.mod(x1, self.grid.chart.periods[0])
        return self.spline(k)(x1)

    def mass(self, k):
        """Weighted mass ``Σ ρ V u`` at stored level ``k``."""
        return weighted_inner(self.u[k], 1.0, self.family, self.pot, self.times[k], self.grid)

    def rescaled(self, c):
        """The solution ``c·u`` (still a solution since ``L`` is linear)."""
        out = SpaceTimeField(
            self.times, self.grid, c * self.u, self.family, self.pot, self.scheme, self.dt, self.t_origin,
            None, dict(self.meta),
        )
        if self.analytic is not None:
            out.analytic = SymbolicField(c * self.analytic.expr, self.analytic.dim, f"{c}*{self.analytic.name}")
        return out

    # -- export -------------------------------------------------------------

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node,t,x,u\n")
            for k, t in enumerate(self.times):
                for i, (x, u) in enumerate(zip(self.grid.x, self.u[k])):
                    fh.write(f"{i},{t:.17g},{x:.17g},{u:.17g}\n")

    def to_binary(self, path):
        header = _HEADER.pack(
            BINARY_MAGIC,
            BINARY_VERSION,
            0,
            self.n_t,
            self.grid.n,
            float(self.times[0]),
            float(self.times[-1]),
            float(self.grid.x[0]),
            float(self.grid.x[-1]),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.u, dtype="<f8").tobytes())


def read_binary(path):
    """Read a binary field dump; returns ``(times, x, u)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ShapeError("file is shorter than the field header")
    magic, version, _, n_t, n_x, t0, t1, x0, x1 = _HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise ShapeError("not a harnacklab field dump (bad magic)")
    if version != BINARY_VERSION:
        raise ShapeError(f"unsupported field dump version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n_t * n_x:
        raise ShapeError(f"payload holds {body.size} values, header says {n_t * n_x}")
    return np.linspace(t0, t1, n_t), np.linspace(x0, x1, n_x), body.reshape(n_t, n_x).copy()


def sample_analytic(expr, family, pot, times, grid, t_origin=0.0, name=""):
    """Field of a closed-form solution sampled on ``times × grid``.

    The expression is in ``t`` and ``x0`` (the reduced coordinate); that it
    solves the heat equation is the caller's responsibility.
    """
    sym = expr if isinstance(expr, SymbolicField) else SymbolicField(expr, family.dim, name)
    times = np.asarray(times, dtype=float)
    pts = grid.points()
    u = np.stack([sym.value(float(t), pts) for t in times])
    if np.any(u <= 0):
        raise ParameterError("analytic field is not positive on the sampled grid")
    return SpaceTimeField(times, grid, u, family, pot, "analytic", 0.0, t_origin, sym, {"name": sym.name})


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _boundary_flux(op, u, grid):
    """Flux through the first and last interior faces of a truncated line."""
    if grid.periodic or grid.layout == POLAR_CELLS:
        return 0.0
    w = op.face_weight
    return (abs(w[0] * (u[1] - u[0])) + abs(w[-1] * (u[-1] - u[-2]))) / grid.dx


def solve_heat(
    u0,
    family,
    pot,
    t_range,
    scheme="implicit_euler",
    *,
    n_steps=None,
    dt=None,
    grid=None,
    layout=None,
    store_every=1,
    flux_tol=1e-6,
    t_origin=None,
):
    """Integrate ``∂ₜu = Lu`` from ``t_range[0]`` to ``t_range[1]``.

    ``u0`` is a positive slice or a callable of the reduced coordinate.  The
    operator is re-assembled at every time level.  Implicit Euler (default)
    is unconditionally stable and positivity preserving; Crank–Nicolson is
    second order in time; the explicit scheme is refused when
    ``Δt·max|Lᵢᵢ| > 1``.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    t0, t1 = (float(v) for v in t_range)
    if not t1 > t0:
        raise ParameterError("t_range must be increasing")
    family.check_time(t0)
    family.check_time(t1)
    if (n_steps is None) == (dt is None):
        raise ParameterError("give exactly one of n_steps and dt")
    if n_steps is None:
        n_steps = max(1, int(round((t1 - t0) / dt)))
    n_steps = int(n_steps)
    step = (t1 - t0) / n_steps
    store_every = int(store_every)
    if store_every < 1 or n_steps % store_every:
        raise ParameterError("store_every must divide the number of steps")

    if grid is None:
        if callable(u0):
            raise ParameterError("a grid (or grid size via make_grid1d) is needed for callable u0")
        grid = make_grid1d(family, len(u0), layout)
    u = np.asarray(u0(grid.x) if callable(u0) else u0, dtype=float).copy()
    if u.shape != (grid.n,):
        raise ShapeError(f"u0 has shape {u.shape}, grid has {grid.n} nodes")
    if not np.all(u > 0):
        raise ParameterError("initial data must be strictly positive")

    frozen = family.static and pot.static
    cache = {}

    def op_at(t):
        if frozen:
            if "op" not in cache:
                cache["op"] = assemble(family, pot, t, grid)
            return cache["op"]
        return assemble(family, pot, t, grid)

    times = t0 + step * np.arange(n_steps + 1)
    times[-1] = t1

    if scheme == "explicit":
        check_times = times[:1] if frozen else times[:-1]
        for t in check_times:
            rate = float(np.max(-op_at(t).diag))
            if step * rate > 1.0:
                raise StabilityError(
                    f"explicit step {step:.3e} exceeds the stability limit {1.0 / rate:.3e} at t={t}"
                )

    stored = [u.copy()]
    flux_peak = 0.0
    op_prev = op_at(t0)
    for k in range(1, n_steps + 1):
        t_new = times[k]
        if scheme == "explicit":
            u = u + step * op_prev.apply(u)
            op_new = op_at(t_new)
        elif scheme == "implicit_euler":
            op_new = op_at(t_new)
            u = op_new.solve_shifted(step, u)
        else:
            op_new = op_at(t_new)
            u = op_new.solve_shifted(0.5 * step, u + 0.5 * step * op_prev.apply(u))
        if not np.all(u > 0):
            bad = int(np.argmin(u))
            raise PositivityError(
                f"solution lost positivity at node {bad} (x={grid.x[bad]:.6g}) at t={t_new:.6g}",
                node=bad,
                time=float(t_new),
            )
        if grid.layout == NODES and grid.chart.kind == LINE:
            mass = float(np.sum(u * op_new.rho * grid.volumes))
            rel = _boundary_flux(op_new, u, grid) / mass
            flux_peak = max(flux_peak, rel)
            if rel > flux_tol:
                raise TruncationError(
                    f"relative boundary flux {rel:.3e} exceeds {flux_tol:.1e} at t={t_new:.6g}; widen the interval"
                )
        if k % store_every == 0:
            stored.append(u.copy())
        op_prev = op_new

    return SpaceTimeField(
        times[::store_every].copy(),
        grid,
        np.array(stored),
        family,
        pot,
        scheme,
        step,
        t0 if t_origin is None else float(t_origin),
        None,
        {"n_steps": n_steps, "store_every": store_every, "boundary_flux_peak": flux_peak},
    )


def fundamental_solution(family, pot, x0, t_range, sigma0, *, n_x=None, grid=None, layout=None, **solve_kw):
    """Heat flow from a mollified point source at ``x0``.

    The source is a discrete Gaussian of width ``σ₀`` in the reduced
    coordinate, normalised to unit weighted mass at ``t_range[0]``.  It is a
    proxy for the heat kernel, suitable for qualitative checks only.  Values
    below 1e-300 are raised to that floor so the data stay positive.
    """
    if grid is None:
        if n_x is None:
            raise ParameterError("give n_x or grid")
        grid = make_grid1d(family, n_x, layout)
    if sigma0 < 2 * grid.dx:
        raise ParameterError(f"sigma0={sigma0} must be at least 2*dx={2 * grid.dx}")
    delta = grid.x - float(x0)
    if grid.periodic:
        period = grid.chart.periods[0]
        delta = (delta + 0.5 * period) % period - 0.5 * period
    bump = np.maximum(np.exp(-0.5 * (delta / sigma0) ** 2), 1e-300)
    bump /= weighted_inner(bump, 1.0, family, pot, t_range[0], grid)
    out = solve_heat(bump, family, pot, t_range, grid=grid, **solve_kw)
    out.meta["source"] = float(x0)
    out.meta["sigma0"] = float(sigma0)
    return out


# ---------------------------------------------------------------------------
# derived fields
# ---------------------------------------------------------------------------


@dataclass
class DerivedFields:
    """Derivative quantities on the field's nodes; NaN where no stencil fits.

    ``grad_f_sq`` and ``df_dt`` are differenced from ``f = log u`` directly,
    which keeps Gaussian-like data accurate where ``u`` is small.
    """

    times: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    u: np.ndarray
    u_x: np.ndarray
    u_xx: np.ndarray
    du_dt: np.ndarray
    grad_u_sq: np.ndarray
    f: np.ndarray
    f_x: np.ndarray
    grad_f_sq: np.ndarray
    df_dt: np.ndarray
    kappa: np.ndarray
    F: dict
    exact: bool = False

    def li_yau_quantity(self, alpha):
        """``|∇u|²/u² − α ∂ₜu/u``."""
        return self.grad_f_sq - alpha * self.df_dt

    def valid(self):
        return np.isfinite(self.grad_f_sq) & np.isfinite(self.df_dt)


def _space_diff(a, dx, periodic, order):
    out = np.full(a.shape, np.nan)
    if periodic:
        right, left = np.roll(a, -1, axis=-1), np.roll(a, 1, axis=-1)
        return (right - left) / (2 * dx) if order == 1 else (right - 2 * a + left) / dx**2
    if order == 1:
        out[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / (2 * dx)
    else:
        out[..., 1:-1] = (a[..., 2:] - 2 * a[..., 1:-1] + a[..., :-2]) / dx**2
    return out


def time_derivative(a, times):
    """Centred differences inside, second-order one-sided at both ends."""
    a = np.asarray(a, dtype=float)
    n = len(times)
    if n < 3:
        raise ParameterError("need at least 3 stored time levels for ∂ₜ")
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        raise ParameterError("stored times must be uniform")
    dt = dts[0]
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - a[:-2]) / (2 * dt)
    out[0] = (-3 * a[0] + 4 * a[1] - a[2]) / (2 * dt)
    out[-1] = (3 * a[-1] - 4 * a[-2] + a[-3]) / (2 * dt)
    return out


def derive_fields(field, alpha_list=(1.0,)):
    """``∇u``, ``∂ₜu``, ``f = log u`` and ``F = τ(|∇f|² − α∂ₜf)`` on every node."""
    grid = field.grid
    times = field.times
    u = field.u
    tau = times - field.t_origin
    kappa = np.stack([metric_coefficient(field.family, float(t), grid) for t in times])
    if field.analytic is not None:
        pts = grid.points()
        sym = field.analytic
        u_x = np.stack([sym.partial(float(t), pts)[..., 0] for t in times])
        u_xx = np.stack([sym.second_partial(float(t), pts)[..., 0, 0] for t in times])
        du_dt = np.stack([sym.dt(float(t), pts) for t in times])
        f = np.log(u)
        f_x = u_x / u
        df_dt = du_dt / u
        exact = True
    else:
        f = np.log(u)
        u_x = _space_diff(u, grid.dx, grid.periodic, 1)
        u_xx = _space_diff(u, grid.dx, grid.periodic, 2)
        f_x = _space_diff(f, grid.dx, grid.periodic, 1)
        du_dt = time_derivative(u, times)
        df_dt = time_derivative(f, times)
        exact = False
    grad_u_sq = kappa * u_x**2
    grad_f_sq = kappa * f_x**2
    F = {float(a): tau[:, None] * (grad_f_sq - a * df_dt) for a in alpha_list}
    return DerivedFields(times, grid.x, tau, u, u_x, u_xx, du_dt, grad_u_sq, f, f_x, grad_f_sq, df_dt, kappa, F, exact)


def apply_in_time(fn, field):
    """Stack ``fn(k, t)`` over stored levels."""
    return np.stack([fn(k, float(t)) for k, t in enumerate(field.times)])


def growth_condition_spot_check(field, kernel):
    """Discrete analogue of the integrability hypothesis on ``|∇(|∇u|²/u)|² + |∇(u log u)|²``.

    ``kernel`` is a :func:`fundamental_solution` on the same grid and time
    levels.  Only finiteness and magnitude are meaningful on a truncated grid.
    """
    if kernel.u.shape != field.u.shape or not np.allclose(kernel.times, field.times):
        raise ShapeError("kernel and field must share grid and time levels")
    grid = field.grid
    d = derive_fields(field)
    q = d.grad_u_sq / field.u
    q_x = _space_diff(np.where(np.isfinite(q), q, 0.0), grid.dx, grid.periodic, 1)
    ulogu_x = _space_diff(field.u * np.log(field.u), grid.dx, grid.periodic, 1)
    integrand = d.kappa * (q_x**2 + ulogu_x**2)
    integrand = np.where(np.isfinite(integrand), integrand, 0.0)
    rho = apply_in_time(lambda k, t: node_density(field.family, field.pot, t, grid), field)
    space = np.sum(integrand * kernel.u * rho * grid.volumes, axis=1)
    value = float(integrate.trapezoid(space, field.times))
    return {"value": value, "finite": bool(math.isfinite(value)), "verifiable": False}
