"""Finite-difference calculus on full chart points and exact closures for symbolic fields.

The identity residuals apply the finite-difference operators here to exact
inner quantities, so their error is the O(ε²) truncation of a single
centred stencil.
"""

from __future__ import annotations

import numpy as np

from ..geometry import _as_points


def fd_partials(fn, t, x, eps):
    """Centred ``∂ₖ fn`` at chart points ``x`` (``(..., d)``)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape)
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps
        out[..., k] = (fn(t, x + e) - fn(t, x - e)) / (2 * eps)
    return out


def fd_second_partials(fn, t, x, eps):
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    out = np.empty(x.shape + (d,))
    f0 = fn(t, x)
    for k in range(d):
        ek = np.zeros(d)
        ek[k] = eps
        out[..., k, k] = (fn(t, x + ek) - 2 * f0 + fn(t, x - ek)) / eps**2
        for l in range(k + 1, d):
            el = np.zeros(d)
            el[l] = eps
            val = (fn(t, x + ek + el) - fn(t, x + ek - el) - fn(t, x - ek + el) + fn(t, x - ek - el)) / (4 * eps**2)
            out[..., k, l] = out[..., l, k] = val
    return out


def fd_dt(fn, t, x, eps):
    return (fn(t + eps, x) - fn(t - eps, x)) / (2 * eps)


def stencil_points(x, eps, dim):
    """Every point a second-order stencil around ``x`` touches (for domain checks)."""
    x = _as_points(x, dim)
    e = np.eye(dim) * eps
    pts = [x]
    for k in range(dim):
        pts += [x + e[k], x - e[k]]
        for l in range(k + 1, dim):
            pts += [x + e[k] + e[l], x + e[k] - e[l], x - e[k] + e[l], x - e[k] - e[l]]
    return np.stack(pts)


class Calculus:
    """Raised gradients, covariant Hessians and ``L`` from coordinate partials."""

    def __init__(self, family, pot):
        self.family = family
        self.pot = pot

    def inner(self, t, x, a, b):
        """``g^{ij} aᵢ bⱼ`` for covectors."""
        return np.einsum("...ij,...i,...j->...", self.family.inverse_metric(t, x), a, b)

    def raise_index(self, t, x, a):
        return np.einsum("...ij,...j->...i", self.family.inverse_metric(t, x), a)

    def tensor_sq(self, t, x, T):
        """``|T|²_g`` for a covariant 2-tensor."""
        ginv = self.family.inverse_metric(t, x)
        return np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, T, T)

    def tensor_inner(self, t, x, S, T):
        ginv = self.family.inverse_metric(t, x)
        return np.einsum("...ia,...jb,...ij,...ab->...", ginv, ginv, S, T)

    def form(self, t, x, T, a, b=None):
        """``T(a♯, b♯)`` for covectors ``a``, ``b``."""
        ar = self.raise_index(t, x, a)
        br = ar if b is None else self.raise_index(t, x, b)
        return np.einsum("...ij,...i,...j->...", T, ar, br)

    def hessian(self, t, x, d1, d2):
        return d2 - np.einsum("...kij,...k->...ij", self.family.christoffel(t, x), d1)

    def witten(self, t, x, d1, d2):
        """``Lu`` from first and second coordinate partials of ``u``."""
        ginv = self.family.inverse_metric(t, x)
        lap = np.einsum("...ij,...ij->...", ginv, self.hessian(t, x, d1, d2))
        return lap - np.einsum("...i,...i->...", self.pot.grad_phi(t, x), d1)

    def fd_witten(self, fn, t, x, eps):
        return self.witten(t, x, fd_partials(fn, t, x, eps), fd_second_partials(fn, t, x, eps))

    # -- closures of a SymbolicField ----------------------------------------

    def grad_sq_of(self, u):
        return lambda t, x: self.inner(t, x, u.partial(t, x), u.partial(t, x))

    def witten_of(self, u):
        return lambda t, x: self.witten(t, x, u.partial(t, x), u.second_partial(t, x))

    def hessian_of(self, u):
        return lambda t, x: self.hessian(t, x, u.partial(t, x), u.second_partial(t, x))
