"""Scenario configs: parsing, validation and construction of the run objects.

A scenario is a YAML mapping with ``schema_version: 1``.  See
``docs/formats.md`` for the full schema; every missing or malformed field
raises :class:`~harnacklab.errors.ConfigError` naming its dotted path.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import sympy as sp
import yaml

from . import geometry as geo
from .errors import ConfigError, HarnackLabError
from .flowcheck import ConditionKind, FlowParams
from .heat import PERIODIC, NODES, POLAR_CELLS, SCHEMES
from .symbolic import T, chart_symbols

SCHEMA_VERSION = 1
CHART_KINDS = ("circle", "torus", "line", "sphere")
FAMILY_PRESETS = (
    "static_flat",
    "round_sphere",
    "conformal_exponential",
    "ricci_flow_sphere",
    "backward_ricci_flow_sphere",
    "shrinking_sphere",
    "one_dimensional",
)
POTENTIAL_KINDS = ("zero", "quadratic", "cosine", "table", "expr", "perelman_compensated")
_TOP_KEYS = {
    "schema_version", "name", "description", "chart", "family", "potential", "flow", "grid", "initial",
    "certificate", "checks", "mc", "seed", "tolerance_scale",
}


# ---------------------------------------------------------------------------
# small validators
# ---------------------------------------------------------------------------


def _get(tree, key, path, kind=None, default=..., choices=None):
    if not isinstance(tree, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    full = f"{path}.{key}" if path else key
    if key not in tree:
        if default is ...:
            raise ConfigError(f"missing required field '{full}'")
        return default
    val = tree[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"field '{full}' must be a number, got {val!r}")
        val = float(val)
    elif kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"field '{full}' must be an integer, got {val!r}")
    elif kind is not None and not isinstance(val, kind):
        raise ConfigError(f"field '{full}' has the wrong type ({type(val).__name__})")
    if choices is not None and val not in choices:
        raise ConfigError(f"field '{full}' must be one of {list(choices)}, got {val!r}")
    return val


def _m_value(v, path):
    if isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return geo.M_INF
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{path}' must be a number or 'inf'")
    return float(v)


def _expr(text, path, allowed):
    try:
        e = sp.sympify(text, locals={s.name: s for s in allowed} | {"t": T})
    except (sp.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"field '{path}': cannot parse expression {text!r} ({exc})") from None
    extra = {s.name for s in e.free_symbols} - {s.name for s in allowed} - {"t"}
    if extra:
        raise ConfigError(f"field '{path}': unknown symbols {sorted(extra)}")
    return e


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def parse_text(text, source="<config>"):
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}: parse error{where}: {problem}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return tree


def bundled_names():
    root = resources.files("harnacklab") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def bundled_text(name):
    root = resources.files("harnacklab") / "scenarios"
    path = root / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return path.read_text(encoding="utf-8")


def load_config(ref):
    """Load a config from a path or the name of a bundled scenario."""
    p = Path(ref)
    if p.is_file():
        return parse_text(p.read_text(encoding="utf-8"), str(p))
    if ref in bundled_names():
        return parse_text(bundled_text(ref), f"scenario:{ref}")
    raise ConfigError(f"{ref}: no such file or bundled scenario")


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------


def build_chart(spec):
    kind = _get(spec, "kind", "chart", str, choices=CHART_KINDS)
    if kind == "circle":
        return geo.Chart.circle(_get(spec, "period", "chart", float, 2 * math.pi))
    if kind == "torus":
        periods = _get(spec, "periods", "chart", list, [2 * math.pi, 2 * math.pi])
        return geo.Chart.torus([float(v) for v in periods])
    if kind == "line":
        lo = _get(spec, "lo", "chart", float)
        hi = _get(spec, "hi", "chart", float)
        if not hi > lo:
            raise ConfigError("field 'chart.hi' must exceed 'chart.lo'")
        return geo.Chart.line(lo, hi, _get(spec, "boundary", "chart", str, "neumann", ("neumann", "clamp")))
    return geo.Chart.sphere_polar(_get(spec, "n", "chart", int, 2), _get(spec, "theta_min", "chart", float, 0.05))


def build_family(chart, spec):
    preset = _get(spec, "preset", "family", str, choices=FAMILY_PRESETS)
    sphere = chart.kind == geo.SPHERE
    if preset in ("round_sphere", "ricci_flow_sphere", "backward_ricci_flow_sphere", "shrinking_sphere") and not sphere:
        raise ConfigError(f"field 'family.preset': {preset} needs chart.kind = sphere")
    n, tmin = (chart.dim, chart.theta_min) if sphere else (None, None)
    if preset == "static_flat":
        if sphere:
            raise ConfigError("field 'family.preset': static_flat is not available on the sphere")
        return geo.static_flat(chart, _get(spec, "c", "family", float, 1.0))
    if preset == "round_sphere":
        return geo.round_sphere(n, _get(spec, "radius", "family", float, 1.0), tmin)
    if preset == "conformal_exponential":
        return geo.conformal_exponential(chart, _get(spec, "rate", "family", float))
    if preset == "ricci_flow_sphere":
        return geo.ricci_flow_sphere(n, _get(spec, "r0", "family", float, 1.0), tmin)
    if preset == "backward_ricci_flow_sphere":
        return geo.backward_ricci_flow_sphere(n, _get(spec, "r0", "family", float, 1.0), tmin)
    if preset == "shrinking_sphere":
        c = _expr(_get(spec, "c", "family", str), "family.c", ())
        c_fn = sp.lambdify(T, c, "math")
        dc_fn = sp.lambdify(T, sp.diff(c, T), "math")
        window = _get(spec, "t_window", "family", list, [-math.inf, math.inf])
        return geo.shrinking_sphere(c_fn, dc_fn, n, tmin, (float(window[0]), float(window[1])))
    # one_dimensional: g = a(t, x0)^2 dx0^2
    (x0,) = chart_symbols(1)
    a = _expr(_get(spec, "a", "family", str), "family.a", (x0,))
    fns = [sp.lambdify((T, x0), e, "numpy") for e in (a, sp.diff(a, x0), sp.diff(a, T), sp.diff(a, x0, T))]
    wrap = [lambda t, s, f=f: np.broadcast_to(np.asarray(f(t, s), float), np.shape(s)).copy() for f in fns]
    static = T not in a.free_symbols
    return geo.ManifoldFamily.one_dimensional(
        chart, wrap[0], wrap[1], None if static else wrap[2], None if static else wrap[3], name=f"a={a}"
    )


def build_potential(family, spec, path="potential"):
    if spec is None:
        return geo.PotentialFamily.zero(family)
    kind = _get(spec, "kind", path, str, choices=POTENTIAL_KINDS)
    if kind == "zero":
        return geo.PotentialFamily.zero(family)
    if kind == "quadratic":
        return geo.PotentialFamily.quadratic(
            family, _get(spec, "a", path, float, 1.0), _get(spec, "center", path, float, 0.0)
        )
    if kind == "cosine":
        return geo.PotentialFamily.cosine(
            family, _get(spec, "amplitude", path, float, 1.0), _get(spec, "wavenumber", path, float, 1.0)
        )
    if kind == "table":
        xs = _get(spec, "xs", path, list)
        vals = _get(spec, "values", path, list)
        if len(xs) != len(vals) or len(xs) < 4:
            raise ConfigError(f"field '{path}.values' must match '{path}.xs' with at least 4 entries")
        return geo.PotentialFamily.table(family, xs, vals, _get(spec, "periodic", path, bool, False))
    if kind == "expr":
        e = _expr(_get(spec, "expr", path, str), f"{path}.expr", chart_symbols(family.dim))
        return geo.PotentialFamily.from_expr(e, family)
    base = spec.get("base")
    return geo.PotentialFamily.perelman_compensated(
        family, None if base is None else build_potential(family, base, f"{path}.base"),
        _get(spec, "t0", path, float, 0.0),
    )


def build_flow(spec):
    spec = spec or {}
    kw = {
        "K": _get(spec, "K", "flow", float, 0.0),
        "m": _m_value(spec.get("m", "inf"), "flow.m"),
        "alpha": _get(spec, "alpha", "flow", float, 2.0),
        "delta": _get(spec, "delta", "flow", float, 1.0),
    }
    if "gamma" in spec:
        kw["gamma"] = _get(spec, "gamma", "flow", float)
    try:
        return FlowParams(**kw)
    except HarnackLabError as exc:
        raise ConfigError(f"field 'flow': {exc}") from None


@dataclass
class GridConfig:
    n_x: int
    t_range: tuple
    n_steps: int
    store_every: int = 1
    scheme: str = "implicit_euler"
    layout: str = None
    t_min: float = 0.05
    t_origin: float = None
    flux_tol: float = 1e-6


def build_grid(spec, family):
    p = "grid"
    tr = _get(spec, "t_range", p, list)
    if len(tr) != 2 or not all(isinstance(v, (int, float)) for v in tr) or not tr[1] > tr[0]:
        raise ConfigError("field 'grid.t_range' must be an increasing pair of numbers")
    cfg = GridConfig(
        n_x=_get(spec, "n_x", p, int),
        t_range=(float(tr[0]), float(tr[1])),
        n_steps=_get(spec, "n_steps", p, int),
        store_every=_get(spec, "store_every", p, int, 1),
        scheme=_get(spec, "scheme", p, str, "implicit_euler", SCHEMES),
        layout=_get(spec, "layout", p, str, None, (None, PERIODIC, NODES, POLAR_CELLS)),
        t_min=_get(spec, "t_min", p, float, 0.05),
        t_origin=_get(spec, "t_origin", p, float, None),
        flux_tol=_get(spec, "flux_tol", p, float, 1e-6),
    )
    if cfg.n_x < 3 or cfg.n_steps < 1 or cfg.store_every < 1 or cfg.n_steps % cfg.store_every:
        raise ConfigError("fields 'grid.n_x', 'grid.n_steps', 'grid.store_every' are inconsistent")
    lo, hi = family.t_window
    if not (lo <= cfg.t_range[0] and cfg.t_range[1] <= hi):
        raise ConfigError(f"field 'grid.t_range' {list(cfg.t_range)} leaves the family's validity window [{lo}, {hi}]")
    return cfg


@dataclass
class Scenario:
    name: str
    description: str
    tree: dict
    chart: object
    family: object
    pot: object
    flow: FlowParams
    grid: GridConfig
    initial: dict
    certificate: dict
    checks: list
    mc: dict
    seed: int
    tolerance_scale: float
    extra: dict = field(default_factory=dict)


def _normalise_checks(raw):
    if not isinstance(raw, list) or not raw:
        raise ConfigError("field 'checks' must be a non-empty list")
    out = []
    for i, c in enumerate(raw):
        if isinstance(c, str):
            c = {"id": c}
        if not isinstance(c, dict) or "id" not in c:
            raise ConfigError(f"field 'checks[{i}]' needs an 'id'")
        c = dict(c)
        c.setdefault("label", c["id"])
        out.append(c)
    for c in out:
        if "tolerance" in c:
            tol = c["tolerance"]
            if isinstance(tol, bool) or not isinstance(tol, (int, float)) or not tol > 0:
                raise ConfigError(f"field 'checks.{c['label']}.tolerance' must be a positive number")
    labels = [c["label"] for c in out]
    if len(set(labels)) != len(labels):
        raise ConfigError("field 'checks': labels must be unique (set 'label' to disambiguate)")
    return out


def build_scenario(tree, seed=None, tolerance_scale=None):
    tree = copy.deepcopy(tree)
    version = _get(tree, "schema_version", "", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version' must be {SCHEMA_VERSION}, got {version}")
    unknown = set(tree) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level fields {sorted(unknown)}")
    name = _get(tree, "name", "", str)
    try:
        chart = build_chart(_get(tree, "chart", "", dict))
        family = build_family(chart, _get(tree, "family", "", dict))
        pot = build_potential(family, tree.get("potential"))
    except ConfigError:
        raise
    except HarnackLabError as exc:
        raise ConfigError(f"chart/family/potential: {exc}") from None
    flow = build_flow(tree.get("flow"))
    needs_field = "initial" in tree
    grid = build_grid(_get(tree, "grid", "", dict), family) if needs_field or "grid" in tree else None
    initial = tree.get("initial")
    if initial is not None:
        if not isinstance(initial, dict) or not ({"expr", "analytic"} & set(initial)):
            raise ConfigError("field 'initial' needs 'expr' (data in x0) or 'analytic' (solution in t, x0)")
        if chart.dim != 1 and chart.kind != geo.SPHERE:
            raise ConfigError("field 'initial': heat solves need a one-dimensional reduction")
    cert = tree.get("certificate") or {}
    if cert:
        _get(cert, "kind", "certificate", str, choices=[k.value for k in ConditionKind])
    mc = tree.get("mc") or {}
    scen_seed = _get(tree, "seed", "", int, 0) if seed is None else int(seed)
    scale = _get(tree, "tolerance_scale", "", float, 1.0) if tolerance_scale is None else float(tolerance_scale)
    if not scale > 0:
        raise ConfigError("tolerance scale must be positive")
    return Scenario(
        name, tree.get("description", ""), tree, chart, family, pot, flow, grid, initial, cert,
        _normalise_checks(tree.get("checks")), mc, scen_seed, scale,
    )
