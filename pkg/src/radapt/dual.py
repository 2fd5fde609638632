"""Dual numbers for forward-mode automatic differentiation.

A :class:`Dual` carries a primal value and one tangent.  Both may be plain
floats or numpy arrays; arrays let a single pass differentiate many
independent lanes at once (e.g. every element of a mesh, each lane seeded
along its own coordinate).  The tangent may carry extra *leading* axes that
broadcast against the primal, which is how several seeds are pushed through
one evaluation.

The module-level math functions (:func:`sqrt`, :func:`atan`, ...) accept
floats, arrays or duals, so analytic callbacks written with them can be
evaluated either way.
"""

import numpy as np


class DomainError(ArithmeticError):
    """Raised when an operation is evaluated outside its domain."""


class Dual:
    """Pair ``(primal, tangent)`` obeying the chain rule."""

    __slots__ = ("primal", "tangent")
    # make ndarray binary operators defer to the reflected Dual methods
    __array_ufunc__ = None

    def __init__(self, primal, tangent=0.0):
        self.primal = primal
        self.tangent = tangent

    def __repr__(self):
        return f"Dual({self.primal!r}, {self.tangent!r})"

    # ---- arithmetic -------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.primal + other.primal, self.tangent + other.tangent)
        return Dual(self.primal + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.primal - other.primal, self.tangent - other.tangent)
        return Dual(self.primal - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.primal, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.primal * other.primal,
                        self.primal * other.tangent + self.tangent * other.primal)
        return Dual(self.primal * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            _check_nonzero(other.primal)
            inv = 1.0 / other.primal
            q = self.primal * inv
            return Dual(q, (self.tangent - q * other.tangent) * inv)
        _check_nonzero(other)
        return Dual(self.primal / other, self.tangent / other)

    def __rtruediv__(self, other):
        _check_nonzero(self.primal)
        inv = 1.0 / self.primal
        q = other * inv
        return Dual(q, -q * inv * self.tangent)

    def __neg__(self):
        return Dual(-self.primal, -self.tangent)

    def __pos__(self):
        return self

    def __abs__(self):
        s = np.sign(self.primal)
        return Dual(np.abs(self.primal), s * self.tangent)

    def __pow__(self, other):
        if isinstance(other, Dual):
            return exp(other * log(self))
        if other == 0:
            return Dual(np.ones_like(self.primal, dtype=float), 0.0 * self.tangent)
        if other == 2:
            return Dual(self.primal * self.primal, 2.0 * self.primal * self.tangent)
        if other != int(other) and np.any(np.asarray(self.primal) <= 0):
            raise DomainError("non-integer power of a non-positive value")
        return Dual(self.primal ** other,
                    other * self.primal ** (other - 1) * self.tangent)

    def __rpow__(self, base):
        return exp(self * np.log(base))

    # ---- comparisons act on the primal -------------------------------------
    def __lt__(self, other):
        return self.primal < primal(other)

    def __le__(self, other):
        return self.primal <= primal(other)

    def __gt__(self, other):
        return self.primal > primal(other)

    def __ge__(self, other):
        return self.primal >= primal(other)

    # ---- array conveniences ------------------------------------------------
    def __getitem__(self, idx):
        if isinstance(idx, tuple) and idx and idx[0] is Ellipsis:
            t = self.tangent[idx] if np.ndim(self.tangent) else self.tangent
            return Dual(self.primal[idx], t)
        # index trailing axes only; leading seed axes of the tangent survive
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self[(Ellipsis,) + _pad(idx, np.ndim(self.primal))]

    @property
    def shape(self):
        return np.shape(self.primal)

    def sum(self, axis=None):
        if axis is None:
            axis = tuple(range(-np.ndim(self.primal), 0))
        return Dual(np.sum(self.primal, axis=axis), np.sum(self.tangent, axis=axis))


def _pad(idx, ndim):
    # turn a leading-axes index into an explicit index on the trailing ndim axes
    n_explicit = sum(1 for i in idx if i is not None and i is not Ellipsis)
    return tuple(idx) + (slice(None),) * max(ndim - n_explicit, 0)


def _check_nonzero(x):
    if np.any(np.asarray(x) == 0):
        raise DomainError("division by a zero primal value")


def primal(x):
    """Primal part of *x* (identity for non-duals)."""
    return x.primal if isinstance(x, Dual) else x


def tangent(x):
    """Tangent part of *x* (zero for non-duals)."""
    return x.tangent if isinstance(x, Dual) else 0.0


def linear(f, x):
    """Apply the linear map *f* to a value or to both parts of a dual."""
    if isinstance(x, Dual):
        return Dual(f(x.primal), f(x.tangent))
    return f(x)


def stack(items, axis=-1):
    """``np.stack`` for a list that may mix duals and plain values."""
    if not any(isinstance(v, Dual) for v in items):
        return np.stack(items, axis=axis)
    ps = [primal(v) for v in items]
    shape = np.broadcast_shapes(*[np.shape(p) for p in ps])
    ps = [np.broadcast_to(p, shape) for p in ps]
    ts = [np.asarray(tangent(v), dtype=float) for v in items]
    tshape = np.broadcast_shapes(shape, *[t.shape for t in ts])
    ts = [np.broadcast_to(t, tshape) for t in ts]
    # axis counts from the end so leading seed axes are untouched
    ax = axis if axis < 0 else axis - len(shape) - 1
    return Dual(np.stack(ps, axis=ax), np.stack(ts, axis=ax))


def seed(x, t):
    """Dual with primal *x* and tangent *t*."""
    return Dual(np.asarray(x, dtype=float), np.asarray(t, dtype=float))


# ---- elementary functions -------------------------------------------------
def sqrt(x):
    if isinstance(x, Dual):
        if np.any(np.asarray(x.primal) <= 0):
            if np.any(np.asarray(x.primal) < 0):
                raise DomainError("sqrt of a negative value")
            raise DomainError("sqrt derivative is unbounded at zero")
        s = np.sqrt(x.primal)
        return Dual(s, 0.5 * x.tangent / s)
    return np.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.primal)
        return Dual(e, e * x.tangent)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        if np.any(np.asarray(x.primal) <= 0):
            raise DomainError("log of a non-positive value")
        return Dual(np.log(x.primal), x.tangent / x.primal)
    return np.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(np.sin(x.primal), np.cos(x.primal) * x.tangent)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(np.cos(x.primal), -np.sin(x.primal) * x.tangent)
    return np.cos(x)


def atan(x):
    if isinstance(x, Dual):
        return Dual(np.arctan(x.primal), x.tangent / (1.0 + x.primal * x.primal))
    return np.arctan(x)


arctan = atan
