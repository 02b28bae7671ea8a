"""Monte Carlo L-diffusion on one-dimensional chart reductions.

Paths follow ``dX = b dt + √(2κ) dW`` with ``κ = g^{11}`` and
``b = −g^{ij}Γ¹ᵢⱼ − g^{11}∂₁φ`` at the chart's reference points, so the
generator on radial functions is ``L``.  Coefficients at path time ``s``
are taken at ``T − s`` (``T`` the end of ``t_span``), which is the
orientation for which ``u(x, T) = E[u(X_T, t₀)]``.

Random numbers come from Philox streams keyed by ``(seed, block)`` with a
fixed block of paths per stream, so results do not depend on how blocks
are spread over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError
from .geometry import CIRCLE, LINE, SPHERE
from .harnack.bounds import psi_factor
from .heat import derive_fields, witten_apply

BLOW_UP = 1e6
TIME_ORIENTATION = "coefficients at T - s along path time s"


@dataclass(frozen=True)
class EnsembleParams:
    n_paths: int = 100_000
    ds: float = 1e-2
    seed: int = 0
    threads: int = 1
    block_size: int = 4096
    antithetic: bool = False
    record_every: int = 0  # store states every this many steps (0: terminal only)

    def __post_init__(self):
        if self.n_paths < 2:
            raise ParameterError("need at least 2 paths")
        if not self.ds > 0:
            raise ParameterError("ds must be positive")
        if self.antithetic and (self.n_paths % 2 or self.block_size % 2):
            raise ParameterError("antithetic pairs need even n_paths and block_size")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in 64 bits")


@dataclass
class DiffusionEnsemble:
    family: object
    pot: object
    x0: float
    t_span: tuple
    params: EnsembleParams
    n_steps: int
    ds: float
    terminal: np.ndarray
    valid: np.ndarray
    reflections: np.ndarray
    record_s: np.ndarray = field(default_factory=lambda: np.zeros(0))
    records: Optional[np.ndarray] = None  # (n_records, n_paths)

    @property
    def horizon(self):
        return self.t_span[1] - self.t_span[0]

    @property
    def n_flagged(self):
        return int(np.sum(~self.valid))

    def estimate(self, values):
        """Mean and standard error of per-path ``values`` over valid paths.

        With antithetic pairs the standard error is taken over pair means
        (pairs with a flagged member are dropped).
        """
        values = np.asarray(values, dtype=float)
        if self.params.antithetic:
            v = values.reshape(-1, 2)
            ok = self.valid.reshape(-1, 2).all(axis=1)
            samples = v[ok].mean(axis=1)
        else:
            samples = values[self.valid]
        n = len(samples)
        if n < 2:
            raise ParameterError("fewer than two valid samples")
        return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(n))

    def summary(self):
        mean, se = self.estimate(self.terminal)
        return {
            "x0": self.x0,
            "t_span": list(self.t_span),
            "n_paths": self.params.n_paths,
            "ds": self.ds,
            "n_steps": self.n_steps,
            "seed": self.params.seed,
            "block_size": self.params.block_size,
            "antithetic": self.params.antithetic,
            "n_flagged": self.n_flagged,
            "total_reflections": int(np.sum(self.reflections)),
            "terminal_mean": mean,
            "terminal_stderr": se,
            "time_orientation": TIME_ORIENTATION,
        }

    def dump_terminal_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("path,x_terminal,valid,reflections\n")
            for i, (x, ok, r) in enumerate(zip(self.terminal, self.valid, self.reflections)):
                fh.write(f"{i},{x:.17g},{int(ok)},{int(r)}\n")


# ---------------------------------------------------------------------------
# coefficients and boundary handling
# ---------------------------------------------------------------------------


def coefficients(family, pot, t, x1):
    """``(b, κ)`` of the reduced generator ``κ∂² + b∂`` at reduced coordinates ``x1``."""
    pts = family.chart.reference_point(x1)
    ginv = family.inverse_metric(t, pts)
    gam = family.christoffel(t, pts)
    kappa = ginv[..., 0, 0]
    drift = -np.einsum("...ij,...ij->...", ginv, gam[..., 0, :, :]) - kappa * pot.dphi(t, pts)[..., 0]
    return drift, kappa


def _boundary(chart):
    if chart.kind == CIRCLE:
        return "wrap", (0.0, chart.periods[0])
    if chart.kind in (LINE, SPHERE):
        return "reflect", chart.radial_range()
    raise ParameterError(f"diffusions need a 1D reduction; chart {chart.kind} has none")


def _reflect(x, lo, hi):
    """Fold ``x`` back into ``[lo, hi]``; returns the folded values and a hit mask."""
    width = hi - lo
    y = np.mod(x - lo, 2 * width)
    hit = (x < lo) | (x > hi)
    return lo + np.where(y > width, 2 * width - y, y), hit


def _run_block(family, pot, x0, t_end, n_steps, ds, key, size, antithetic, record_every, mode, lims):
    gen = np.random.Generator(np.random.Philox(key=np.array(key, dtype=np.uint64)))
    x = np.full(size, float(x0))
    valid = np.ones(size, dtype=bool)
    refl = np.zeros(size, dtype=np.int64)
    recs = []
    half = size // 2
    for k in range(n_steps):
        t = t_end - k * ds
        b, kappa = coefficients(family, pot, t, x)
        if antithetic:
            z = gen.standard_normal(half)
            z = np.stack([z, -z], axis=-1).reshape(size)
        else:
            z = gen.standard_normal(size)
        with np.errstate(invalid="ignore", over="ignore"):
            x = x + b * ds + np.sqrt(2 * np.maximum(kappa, 0) * ds) * z
        bad = ~np.isfinite(x) | (np.abs(x) > BLOW_UP) | ~np.isfinite(b) | ~np.isfinite(kappa)
        valid &= ~bad
        x = np.where(bad, x0, x)
        if mode == "wrap":
            x = np.mod(x - lims[0], lims[1] - lims[0]) + lims[0]
        else:
            x, hit = _reflect(x, *lims)
            refl += hit
        if record_every and (k + 1) % record_every == 0:
            recs.append(x.copy())
    return x, valid, refl, recs


def simulate(family, pot, x0, t_span, params=None, **overrides):
    """Euler–Maruyama ensemble from reduced coordinate ``x0`` over ``t_span = (t₀, T)``.

    The horizon ``T − t₀`` is split into steps of at most ``ds``.  Paths
    whose coefficients or state become non-finite or exceed ``BLOW_UP`` are
    flagged and excluded from estimates.
    """
    params = params or EnsembleParams()
    if overrides:
        params = EnsembleParams(**{**params.__dict__, **overrides})
    t0, t1 = (float(v) for v in t_span)
    if not t1 > t0:
        raise ParameterError("t_span must be increasing")
    family.check_time(t0)
    family.check_time(t1)
    mode, lims = _boundary(family.chart)
    if not lims[0] <= x0 <= lims[1]:
        raise ParameterError(f"start {x0} lies outside the reduced range {lims}")
    n_steps = max(1, int(math.ceil((t1 - t0) / params.ds - 1e-9)))
    ds = (t1 - t0) / n_steps
    sizes = []
    left = params.n_paths
    while left > 0:
        sizes.append(min(params.block_size, left))
        left -= sizes[-1]
    jobs = [
        (family, pot, x0, t1, n_steps, ds, (params.seed, b), s, params.antithetic, params.record_every, mode, lims)
        for b, s in enumerate(sizes)
    ]
    if params.threads > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            results = list(pool.map(lambda a: _run_block(*a), jobs))
    else:
        results = [_run_block(*a) for a in jobs]
    terminal = np.concatenate([r[0] for r in results])
    valid = np.concatenate([r[1] for r in results])
    refl = np.concatenate([r[2] for r in results])
    record_s = np.zeros(0)
    records = None
    if params.record_every:
        n_rec = len(results[0][3])
        records = np.stack([np.concatenate([r[3][j] for r in results]) for j in range(n_rec)])
        record_s = ds * params.record_every * np.arange(1, n_rec + 1)
    return DiffusionEnsemble(family, pot, float(x0), (t0, t1), params, n_steps, ds, terminal, valid, refl,
                             record_s, records)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def _check_span(ens, field):
    if abs(field.times[0] - ens.t_span[0]) > 1e-9 or abs(field.times[-1] - ens.t_span[1]) > 1e-9:
        raise ParameterError(
            f"field spans [{field.times[0]}, {field.times[-1]}] but the ensemble spans {list(ens.t_span)}"
        )


def _interp(field, values, x):
    """Linear interpolation of a node array in the reduced coordinate."""
    xs = field.grid.x
    if field.grid.periodic:
        period = field.grid.chart.periods[0]
        return np.interp(np.mod(x, period), np.append(xs, xs[0] + period), np.append(values, values[0]))
    return np.interp(x, xs, values)


def _result(check_id, value, stderr, allowance, inequality, extra=None):
    bound = 3 * stderr + allowance
    passed = value >= -bound if inequality else abs(value) <= bound
    out = {
        "check_id": check_id,
        "value": value,
        "stderr": stderr,
        "allowance": allowance,
        "bound": bound,
        "passed": bool(passed),
    }
    out.update(extra or {})
    return out


def feynman_kac_check(ens, field, exact=None, u0=None):
    """``E[u₀(X_T)] − u(x₀, T)`` within ``3·stderr + Δs·max|u₀|·horizon``.

    ``u0`` (a callable of the reduced coordinate) defaults to spline
    interpolation of the field's first slice; ``exact`` replaces the grid
    value at ``(x₀, T)`` as reference when given.
    """
    _check_span(ens, field)
    f0 = u0 if u0 is not None else field.spline(0)
    if u0 is None and field.grid.periodic:
        period = field.grid.chart.periods[0]
        f0 = lambda x, s=field.spline(0): s(np.mod(x, period))  # noqa: E731
    mean, se = ens.estimate(f0(ens.terminal))
    ref = float(exact) if exact is not None else float(field.value_at(field.n_t - 1, ens.x0))
    allowance = ens.ds * float(np.max(np.abs(field.u[0]))) * ens.horizon
    return _result("feynman_kac", mean - ref, se, allowance, False,
                   {"estimate": mean, "reference": ref, "n_flagged": ens.n_flagged})


def martingale_inequality_check(ens, field, K, sup_bound=None, t_min=0.05):
    """``E[H(X_T, t₀)] − H(x₀, T)`` for ``H = ψ(τ)|∇u|²/u − u log(A/u)``.

    The theorem predicts a non-negative value; the check accepts values
    above ``−(3·stderr + allowance)`` with the Feynman–Kac allowance plus
    the grid tolerance in ``H(x₀, T)``.  Intermediate levels (when the
    ensemble recorded them and ``T − s > t_min``) are reported as a profile.
    """
    _check_span(ens, field)
    A = field.sup_bound_A if sup_bound is None else float(sup_bound)
    d = derive_fields(field)
    q = np.where(np.isfinite(d.grad_u_sq), d.grad_u_sq, 0.0) / field.u

    def H(k, x):
        u = _interp(field, field.u[k], x)
        p = u * np.log(A / u)
        tau = field.times[k] - field.t_origin
        return (psi_factor(tau, K) * _interp(field, q[k], x) if tau > 0 else 0.0) - p

    start = float(np.asarray(H(field.n_t - 1, np.array([ens.x0])))[0])
    mean, se = ens.estimate(H(0, ens.terminal))
    allowance = ens.ds * A * math.log(max(A / float(np.min(field.u)), math.e)) * ens.horizon
    allowance += field.grid.dx**2 * float(np.max(np.abs(q))) * 10
    profile = []
    if ens.records is not None:
        for s, xs in zip(ens.record_s, ens.records):
            t = ens.t_span[1] - s
            k = int(np.argmin(np.abs(field.times - t)))
            if abs(field.times[k] - t) < 1e-9 and t - field.t_origin > t_min:
                m, e = ens.estimate(H(k, xs))
                profile.append({"s": float(s), "mean": m - start, "stderr": e})
    return _result("martingale_inequality", mean - start, se, allowance, True,
                   {"estimate": mean, "h_start": start, "profile": profile})


def generator_consistency_check(family, pot, fn, x0, t, grid, params=None, s=None, **overrides):
    """Short-time ``(E[v(X_s)] − v(x₀))/s`` against the discrete ``Lv(x₀)``.

    ``fn`` is a smooth function of the reduced coordinate.  The allowance is
    ``s·(|Lv| + max|L²v|)`` with ``L²v`` estimated on the grid.
    """
    params = params or EnsembleParams()
    if overrides:
        params = EnsembleParams(**{**params.__dict__, **overrides})
    s = s if s is not None else 5 * params.ds
    ens = simulate(family, pot, x0, (t - s, t), params)
    v0 = float(fn(np.array([x0]))[0])
    mean, se = ens.estimate((fn(ens.terminal) - v0) / s)
    vals = fn(grid.x)
    lv = witten_apply(vals, family, pot, t, grid)
    llv = witten_apply(lv, family, pot, t, grid)
    interior = grid.interior(2)
    ref = float(np.interp(x0, grid.x, lv))
    allowance = s * float(np.max(np.abs(llv[interior])))
    return _result("generator_consistency", mean - ref, se, allowance, False, {"estimate": mean, "reference": ref})


def total_variation_to_uniform(samples, period, n_bins=50):
    """TV distance between the histogram of circle samples and the uniform law."""
    hist, _ = np.histogram(np.mod(samples, period), bins=n_bins, range=(0.0, period))
    p = hist / hist.sum()
    return 0.5 * float(np.sum(np.abs(p - 1.0 / n_bins)))
