"""Scalar hyper-dual numbers ``re + e1*eps1 + e2*eps2 + e12*eps1*eps2``.

Arithmetic follows eps1**2 == eps2**2 == 0, so evaluating a function on
``x + v1*eps1 + v2*eps2`` yields the value, the two directional
derivatives and the mixed second-order term in one pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real

import numpy as np

from ..errors import DomainError, InvalidValueError, UnorderedError
from .primitives import PRIMITIVES, Primitive, power


@dataclass(frozen=True, slots=True)
class HyperDual:
    re: float
    e1: float = 0.0
    e2: float = 0.0
    e12: float = 0.0

    # numpy must not try to absorb us into an object array
    __array_ufunc__ = None

    def as_tuple(self):
        return (self.re, self.e1, self.e2, self.e12)

    def __iter__(self):
        return iter(self.as_tuple())

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_sub(self, other)

    def __rsub__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_sub(other, self)

    def __mul__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_div(self, other)

    def __rtruediv__(self, other):
        other = _coerce(other)
        return other if other is NotImplemented else hd_div(other, self)

    def __neg__(self):
        return HyperDual(-self.re, -self.e1, -self.e2, -self.e12)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, HyperDual):
            return hd_pow(self, exponent)
        return hd_unary(power(exponent), self)

    def __rpow__(self, base):
        return hd_pow(_coerce(base), self)

    def __abs__(self):
        return hd_unary(PRIMITIVES["abs"], self)

    # -- ordering: primal only ----------------------------------------------
    def __lt__(self, other):
        return hd_compare(self, _coerce(other)) < 0

    def __le__(self, other):
        return hd_compare(self, _coerce(other)) <= 0

    def __gt__(self, other):
        return hd_compare(self, _coerce(other)) > 0

    def __ge__(self, other):
        return hd_compare(self, _coerce(other)) >= 0

    def __float__(self):
        return float(self.re)

    # elementwise functions, so np-style code written as x.exp() etc. works
    def apply(self, name):
        return hd_unary(PRIMITIVES[name], self)


def _coerce(x):
    if isinstance(x, HyperDual):
        return x
    if isinstance(x, (Real, np.floating, np.integer)):
        return HyperDual(float(x))
    return NotImplemented


def lift(x) -> HyperDual:
    """Embed a finite real as ``(x, 0, 0, 0)``."""
    x = float(x)
    if not math.isfinite(x):
        raise InvalidValueError(f"cannot lift non-finite value {x!r}")
    return HyperDual(x, 0.0, 0.0, 0.0)


def hd_add(a: HyperDual, b: HyperDual) -> HyperDual:
    return HyperDual(a.re + b.re, a.e1 + b.e1, a.e2 + b.e2, a.e12 + b.e12)


def hd_sub(a: HyperDual, b: HyperDual) -> HyperDual:
    return HyperDual(a.re - b.re, a.e1 - b.e1, a.e2 - b.e2, a.e12 - b.e12)


def hd_mul(a: HyperDual, b: HyperDual) -> HyperDual:
    # 9 products, 5 additions
    return HyperDual(
        a.re * b.re,
        a.re * b.e1 + a.e1 * b.re,
        a.re * b.e2 + a.e2 * b.re,
        a.re * b.e12 + a.e12 * b.re + a.e1 * b.e2 + a.e2 * b.e1,
    )


def hd_unary(p: Primitive, a: HyperDual) -> HyperDual:
    """Apply a univariate primitive through its second-order Taylor rule."""
    x = np.float64(a.re)
    if not np.all(p.check(x)):
        raise DomainError(p.name, a.re)
    d1 = float(p.df(x))
    d2 = float(p.d2f(x))
    return HyperDual(
        float(p.f(x)),
        d1 * a.e1,
        d1 * a.e2,
        d1 * a.e12 + d2 * a.e1 * a.e2,
    )


def hd_div(a: HyperDual, b: HyperDual) -> HyperDual:
    if b.re == 0:
        raise ZeroDivisionError("hyper-dual division by a zero primal")
    return hd_mul(a, hd_unary(PRIMITIVES["recip"], b))


def hd_pow(a: HyperDual, b: HyperDual) -> HyperDual:
    """``a ** b`` with a hyper-dual exponent, computed as ``exp(b * log(a))``."""
    return hd_unary(PRIMITIVES["exp"], hd_mul(b, hd_unary(PRIMITIVES["log"], a)))


def hd_compare(a: HyperDual, b: HyperDual) -> int:
    """Order two hyper-duals by primal value: -1, 0 or 1."""
    if math.isnan(a.re) or math.isnan(b.re):
        raise UnorderedError("comparison with a NaN primal")
    return (a.re > b.re) - (a.re < b.re)

