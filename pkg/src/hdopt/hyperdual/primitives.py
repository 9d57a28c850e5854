"""Univariate primitives with first and second derivatives.

Every function here is written against numpy so the same primitive serves
scalar hyper-duals, the batched tensor form and the reverse-mode tape.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class Primitive:
    """A twice-differentiable real function ``f`` with ``df``, ``d2f`` and a domain test.

    All callables accept numpy scalars or arrays and operate elementwise.
    ``domain`` returns a boolean (array) telling where the input is valid;
    ``None`` means valid everywhere.
    """

    name: str
    f: Callable
    df: Callable
    d2f: Callable
    domain: Optional[Callable] = None

    def check(self, x):
        """Boolean mask of valid inputs (all True when unrestricted).

        NaN is let through so that non-finite values propagate instead of
        raising; callers detect them downstream.
        """
        if self.domain is None:
            return np.ones(np.shape(x), dtype=bool)
        return np.asarray(self.domain(x)) | np.isnan(x)

    def __repr__(self):
        return f"Primitive({self.name})"


def _positive(x):
    return np.asarray(x) > 0


def _nonzero(x):
    return np.asarray(x) != 0


def _zeros(x):
    return np.zeros_like(x)


def _ones(x):
    return np.ones_like(x)


def _sigmoid(x):
    # tanh form: no overflow for large |x|
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _sigmoid_d(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _sigmoid_d2(x):
    s = _sigmoid(x)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _tanh_d(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


# Kinks (relu and abs at exactly 0) use derivative 0.
def _relu(x):
    return np.where(x > 0, x, np.zeros_like(x))


def _relu_d(x):
    return np.where(x > 0, np.ones_like(x), np.zeros_like(x))


def _abs_d(x):
    return np.sign(x)


def power(c: float) -> Primitive:
    """``x ** c`` for a constant exponent ``c``."""
    c = float(c)
    if c.is_integer() and c >= 0:
        domain = None
    elif c.is_integer():
        domain = _nonzero
    else:
        domain = _positive
    if c == 0.0:
        return Primitive("pow(0)", _ones, _zeros, _zeros, domain)
    if c == 1.0:
        return Primitive("pow(1)", lambda x: x * 1.0, _ones, _zeros, domain)
    if c == 2.0:
        return Primitive("pow(2)", lambda x: x * x, lambda x: 2.0 * x,
                         lambda x: np.full_like(x, 2.0), domain)
    return Primitive(
        f"pow({c:g})",
        lambda x: x ** c,
        lambda x: c * x ** (c - 1.0),
        lambda x: c * (c - 1.0) * x ** (c - 2.0),
        domain,
    )


PRIMITIVES = MappingProxyType({
    "neg": Primitive("neg", lambda x: -x, lambda x: -np.ones_like(x), _zeros, None),
    "recip": Primitive("recip", lambda x: 1.0 / x, lambda x: -1.0 / (x * x),
                       lambda x: 2.0 / (x * x * x), _nonzero),
    "exp": Primitive("exp", np.exp, np.exp, np.exp, None),
    "log": Primitive("log", np.log, lambda x: 1.0 / x, lambda x: -1.0 / (x * x), _positive),
    "sqrt": Primitive("sqrt", np.sqrt, lambda x: 0.5 / np.sqrt(x),
                      lambda x: -0.25 / (x * np.sqrt(x)), _positive),
    "tanh": Primitive("tanh", np.tanh, _tanh_d, _tanh_d2, None),
    "sigmoid": Primitive("sigmoid", _sigmoid, _sigmoid_d, _sigmoid_d2, None),
    "relu": Primitive("relu", _relu, _relu_d, _zeros, None),
    "abs": Primitive("abs", np.abs, _abs_d, _zeros, None),
    "sin": Primitive("sin", np.sin, np.cos, lambda x: -np.sin(x), None),
    "cos": Primitive("cos", np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), None),
    "square": power(2),
})


def get_primitive(name: str) -> Primitive:
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise KeyError(f"unknown primitive {name!r}; known: {sorted(PRIMITIVES)}") from None
