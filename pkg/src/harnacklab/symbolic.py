"""Space-time scalar fields defined by sympy expressions.

A :class:`SymbolicField` turns an expression in ``t, x0, ..., x{d-1}`` into
vectorised numpy callables for the value and its partial derivatives.  The
identity-residual checks use these as exact inner quantities, and
:func:`harnacklab.geometry.PotentialFamily.from_expr` builds potentials from
them.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import sympy as sp

T = sp.Symbol("t", real=True)


def chart_symbols(dim):
    return tuple(sp.Symbol(f"x{i}", real=True) for i in range(dim))


def _vectorise(expr, args):
    fn = sp.lambdify(args, expr, modules="numpy")

    def call(t, x):
        x = np.asarray(x, dtype=float)
        cols = [x[..., i] for i in range(x.shape[-1])]
        out = fn(t, *cols)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    return call


def _stack(calls, last_shape):
    def call(t, x):
        x = np.asarray(x, dtype=float)
        parts = [c(t, x) for c in calls]
        return np.stack(parts, axis=-1).reshape(x.shape[:-1] + last_shape)

    return call


class SymbolicField:
    """Scalar ``f(t, x)`` with exact partial derivatives.

    Derivatives are plain coordinate partials; covariant corrections are the
    caller's business since they depend on the metric.
    """

    def __init__(self, expr, dim, name=""):
        self.dim = int(dim)
        self.xs = chart_symbols(self.dim)
        self.expr = sp.sympify(expr)
        self.name = name or str(self.expr)
        self._args = (T,) + self.xs

    def _fn(self, expr):
        return _vectorise(expr, self._args)

    def diff_expr(self, *wrt):
        return sp.diff(self.expr, *wrt) if wrt else self.expr

    @cached_property
    def value(self):
        return self._fn(self.expr)

    @cached_property
    def partial(self):
        """Callable returning ``(..., d)`` first partials."""
        return _stack([self._fn(sp.diff(self.expr, xi)) for xi in self.xs], (self.dim,))

    @cached_property
    def second_partial(self):
        """Callable returning ``(..., d, d)`` second partials."""
        calls = [self._fn(sp.diff(self.expr, xi, xj)) for xi in self.xs for xj in self.xs]
        return _stack(calls, (self.dim, self.dim))

    @cached_property
    def dt(self):
        return self._fn(sp.diff(self.expr, T))

    @cached_property
    def partial_dt(self):
        return _stack([self._fn(sp.diff(self.expr, xi, T)) for xi in self.xs], (self.dim,))

    @cached_property
    def second_partial_dt(self):
        calls = [self._fn(sp.diff(self.expr, xi, xj, T)) for xi in self.xs for xj in self.xs]
        return _stack(calls, (self.dim, self.dim))

    def time_derivative(self):
        """The field ``∂ₜf`` as a new :class:`SymbolicField`."""
        return SymbolicField(sp.diff(self.expr, T), self.dim, name=f"d/dt[{self.name}]")

    @property
    def is_static(self):
        return T not in self.expr.free_symbols

    @property
    def is_zero(self):
        return self.expr == 0

    def __repr__(self):
        return f"SymbolicField({self.name!r}, dim={self.dim})"
