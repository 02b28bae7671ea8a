"""Bundled symbolic test functions for the identity residual suites.

Each builder returns a fresh :class:`IdentityCase`.  Cases marked
``heat_solution`` solve ``∂ₜu = Lu`` exactly, which the heat-equation
precondition in :func:`~harnacklab.harnack.identities.run_identity_case`
re-verifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from ..geometry import (
    Chart,
    ManifoldFamily,
    PotentialFamily,
    conformal_exponential,
    ricci_flow_sphere,
    round_sphere,
    static_flat,
)
from ..symbolic import T, SymbolicField, chart_symbols


@dataclass
class IdentityCase:
    name: str
    family: object
    pot: object
    u: SymbolicField
    points: np.ndarray
    times: np.ndarray
    heat_solution: bool = False
    t_origin: float = 0.0
    K: float = 0.0
    m: float = None
    alpha: float = 2.0
    sup_bound: float = 1.0


(X,) = chart_symbols(1)
THETA, PHI = chart_symbols(2)
_LINE_PTS = np.linspace(-2.0, 2.0, 9)[:, None]
_CIRCLE_PTS = np.linspace(0.1, 2 * math.pi - 0.1, 11)[:, None]


def _sphere_pts():
    th, ph = np.meshgrid(np.linspace(0.5, 2.6, 5), np.linspace(0.3, 5.9, 4), indexing="ij")
    return np.stack([th.ravel(), ph.ravel()], axis=-1)


def gaussian_line():
    fam = static_flat(Chart.line(-10.0, 10.0))
    u = SymbolicField(sp.exp(-(X**2) / (4 * T)) / sp.sqrt(4 * sp.pi * T), 1, "gaussian")
    return IdentityCase("gaussian_line", fam, PotentialFamily.zero(fam), u, _LINE_PTS,
                        np.array([0.3, 0.6, 1.0]), heat_solution=True, m=3.0, sup_bound=1.0)


def circle_cosine():
    fam = static_flat(Chart.circle())
    u = SymbolicField(1 + sp.cos(X) * sp.exp(-T) / 2, 1, "1+cos(x)e^-t/2")
    return IdentityCase("circle_cosine", fam, PotentialFamily.zero(fam), u, _CIRCLE_PTS,
                        np.array([0.1, 0.5, 1.5]), heat_solution=True, m=3.0, sup_bound=1.5)


def ou_line():
    fam = static_flat(Chart.line(-8.0, 8.0))
    u = SymbolicField(3 + X * sp.exp(-T), 1, "3+x e^-t")
    return IdentityCase("ou_line", fam, PotentialFamily.quadratic(fam, 1.0), u, _LINE_PTS,
                        np.array([0.2, 0.7, 1.5]), heat_solution=True, m=3.0, sup_bound=6.0)


def ricci_flow_s2():
    fam = ricci_flow_sphere(2)
    u = SymbolicField(2 + (1 - 2 * T) * sp.cos(THETA), 2, "2+(1-2t)cos(theta)")
    return IdentityCase("ricci_flow_s2", fam, PotentialFamily.zero(fam), u, _sphere_pts(),
                        np.array([0.05, 0.1, 0.2]), heat_solution=True, m=4.0, sup_bound=3.0)


def exp_circle_sine():
    fam = conformal_exponential(Chart.circle(), 1.0)
    u = SymbolicField(sp.sin(X), 1, "sin(x)")
    return IdentityCase("exp_circle_sine", fam, PotentialFamily.zero(fam), u, _CIRCLE_PTS, np.array([0.0, 0.5]))


def moving_potential_line():
    fam = static_flat(Chart.line(-8.0, 8.0))
    pot = PotentialFamily.from_expr(T * X, fam, name="t*x")
    u = SymbolicField(sp.sin(X), 1, "sin(x)")
    return IdentityCase("moving_potential_line", fam, pot, u, _LINE_PTS, np.array([0.5, 1.0]))


def ou_square():
    fam = static_flat(Chart.line(-8.0, 8.0))
    u = SymbolicField(X**2, 1, "x^2")
    return IdentityCase("ou_square", fam, PotentialFamily.quadratic(fam, 1.0), u, _LINE_PTS, np.array([0.0]))


def circle_sine():
    fam = static_flat(Chart.circle())
    u = SymbolicField(sp.sin(X), 1, "sin(x)")
    return IdentityCase("circle_sine", fam, PotentialFamily.zero(fam), u, _CIRCLE_PTS, np.array([0.0]))


def sphere_nonradial():
    fam = ricci_flow_sphere(2)
    pot = PotentialFamily.cosine(fam, 0.3)
    u = SymbolicField((1 + T) * sp.sin(THETA) * sp.cos(PHI) + sp.cos(THETA) ** 2, 2, "nonradial")
    return IdentityCase("sphere_nonradial", fam, pot, u, _sphere_pts(), np.array([0.05, 0.15]))


def round_sphere_static():
    fam = round_sphere(2)
    u = SymbolicField(sp.sin(THETA) * sp.sin(PHI) + sp.cos(THETA), 2, "sphere_linear")
    return IdentityCase("round_sphere_static", fam, PotentialFamily.zero(fam), u, _sphere_pts(), np.array([0.0]))


def nonconformal_circle():
    a = lambda t, s: 1 + 0.2 * t * np.sin(s)  # noqa: E731
    fam = ManifoldFamily.one_dimensional(
        Chart.circle(), a,
        lambda t, s: 0.2 * t * np.cos(s),
        lambda t, s: 0.2 * np.sin(s),
        lambda t, s: 0.2 * np.cos(s),
        name="1+0.2t sin x",
    )
    u = SymbolicField(sp.cos(X) * (1 + T), 1, "(1+t)cos(x)")
    return IdentityCase("nonconformal_circle", fam, PotentialFamily.zero(fam), u, _CIRCLE_PTS, np.array([0.3, 1.0]))


BUILDERS = {
    "gaussian_line": gaussian_line,
    "circle_cosine": circle_cosine,
    "ou_line": ou_line,
    "ricci_flow_s2": ricci_flow_s2,
    "exp_circle_sine": exp_circle_sine,
    "moving_potential_line": moving_potential_line,
    "ou_square": ou_square,
    "circle_sine": circle_sine,
    "sphere_nonradial": sphere_nonradial,
    "round_sphere_static": round_sphere_static,
    "nonconformal_circle": nonconformal_circle,
}


def all_cases():
    return [b() for b in BUILDERS.values()]
