"""Hyper-dual arrays: four equally shaped numpy arrays evaluated together.

A leading batch axis is used to push many tangent pairs through a model in
one forward pass.  Products follow the same rule as the scalar kernel,
applied to whole arrays (or blockwise, for ``@``).
"""
from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from .number import HyperDual
from .primitives import PRIMITIVES, Primitive, power


def _is_const(x):
    return isinstance(x, (int, float, np.ndarray, np.number))


class HDTensor:
    """Hyper-dual array with components ``re``, ``e1``, ``e2``, ``e12``.

    Missing derivative components default to zeros.  Components are
    broadcast to one common shape on construction, so lifted constants and
    repeated parameters cost no extra memory until they are combined.
    """

    __slots__ = ("re", "e1", "e2", "e12")
    __array_ufunc__ = None

    def __init__(self, re, e1=None, e2=None, e12=None):
        if (type(re) is np.ndarray and type(e1) is np.ndarray and type(e2) is np.ndarray
                and type(e12) is np.ndarray and re.dtype.kind == "f"
                and re.shape == e1.shape == e2.shape == e12.shape
                and re.dtype == e1.dtype == e2.dtype == e12.dtype):
            self.re, self.e1, self.e2, self.e12 = re, e1, e2, e12
            return
        re = np.asarray(re)
        if not np.issubdtype(re.dtype, np.floating):
            re = re.astype(np.float64)
        zero = np.zeros((), dtype=re.dtype)
        parts = [re] + [zero if c is None else np.asarray(c, dtype=re.dtype) for c in (e1, e2, e12)]
        try:
            self.re, self.e1, self.e2, self.e12 = np.broadcast_arrays(*parts)
        except ValueError as exc:
            raise ShapeError(f"component shapes disagree: {[p.shape for p in parts]}") from exc

    @classmethod
    def lift(cls, x):
        return cls(x)

    @classmethod
    def from_components(cls, re, e1, e2, e12):
        return cls(re, e1, e2, e12)

    def components(self):
        return self.re, self.e1, self.e2, self.e12

    def linear(self, fn):
        """Apply a linear map ``fn`` to each component."""
        return HDTensor(fn(self.re), fn(self.e1), fn(self.e2), fn(self.e12))

    # -- array protocol ------------------------------------------------------
    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @property
    def dtype(self):
        return self.re.dtype

    @property
    def size(self):
        return self.re.size

    def __len__(self):
        return len(self.re)

    def __repr__(self):
        return f"HDTensor(shape={self.shape}, dtype={self.dtype})"

    def __getitem__(self, idx):
        return self.linear(lambda c: c[idx])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.linear(lambda c: c.reshape(shape))

    def transpose(self, *axes):
        return self.linear(lambda c: c.transpose(*axes))

    def swapaxes(self, a, b):
        return self.linear(lambda c: np.swapaxes(c, a, b))

    def astype(self, dtype):
        return HDTensor(*(c.astype(dtype) for c in self.components()))

    def sum(self, axis=None, keepdims=False):
        return hdt_reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        # python float keeps float32 inputs in float32
        return hdt_reduce_sum(self, axis, keepdims) * (1.0 / n)

    def max(self, axis):
        """Maximum along ``axis``, selected by primal value."""
        idx = np.expand_dims(np.argmax(self.re, axis=axis), axis)
        return self.linear(lambda c: np.take_along_axis(c, idx, axis=axis).squeeze(axis))

    def item(self) -> HyperDual:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return HyperDual(*(float(c.reshape(())) for c in self.components()))

    def apply(self, name):
        return hdt_map(PRIMITIVES[name], self)

    def isfinite(self):
        return np.all([np.all(np.isfinite(c)) for c in self.components()])

    # -- arithmetic ----------------------------------------------------------
    def __neg__(self):
        return self.linear(np.negative)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, HDTensor):
            return HDTensor(self.re + other.re, self.e1 + other.e1,
                            self.e2 + other.e2, self.e12 + other.e12)
        if isinstance(other, HyperDual):
            return self + HDTensor(*other.as_tuple())
        if _is_const(other):
            return HDTensor(self.re + other, self.e1, self.e2, self.e12)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (HDTensor, HyperDual)) or _is_const(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, HDTensor):
            return hdt_mul(self, other)
        if isinstance(other, HyperDual):
            return hdt_mul(self, HDTensor(*other.as_tuple()))
        if _is_const(other):
            return self.linear(lambda c: c * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, HDTensor):
            _check_nonzero(other.re)
            return hdt_mul(self, hdt_map(PRIMITIVES["recip"], other))
        if isinstance(other, HyperDual):
            return self / HDTensor(*other.as_tuple())
        if _is_const(other):
            _check_nonzero(other)
            return self.linear(lambda c: c / other)
        return NotImplemented

    def __rtruediv__(self, other):
        _check_nonzero(self.re)
        return hdt_map(PRIMITIVES["recip"], self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, HDTensor):
            return hdt_map(PRIMITIVES["exp"], exponent * hdt_map(PRIMITIVES["log"], self))
        return hdt_map(power(exponent), self)

    def __rpow__(self, base):
        return hdt_map(PRIMITIVES["exp"], self * np.log(base))

    def __abs__(self):
        return hdt_map(PRIMITIVES["abs"], self)

    def __matmul__(self, other):
        if isinstance(other, HDTensor):
            return hdt_matmul(self, other)
        if _is_const(other):
            return self.linear(lambda c: c @ other)
        return NotImplemented

    def __rmatmul__(self, other):
        if _is_const(other):
            return self.linear(lambda c: other @ c)
        return NotImplemented


def _check_nonzero(x):
    if np.any(np.asarray(x) == 0):
        raise ZeroDivisionError("hyper-dual division by a zero primal")


def hdt_mul(a: HDTensor, b: HDTensor) -> HDTensor:
    return HDTensor(
        a.re * b.re,
        a.re * b.e1 + a.e1 * b.re,
        a.re * b.e2 + a.e2 * b.re,
        a.re * b.e12 + a.e12 * b.re + a.e1 * b.e2 + a.e2 * b.e1,
    )


def hdt_matmul(a: HDTensor, b: HDTensor) -> HDTensor:
    """Blockwise product rule for ``a @ b`` (numpy matmul broadcasting)."""
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul needs at least 1-d operands")
    k_a = a.shape[-1]
    k_b = b.shape[-2] if b.ndim > 1 else b.shape[0]
    if k_a != k_b:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    A, A1, A2, A12 = a.components()
    B, B1, B2, B12 = b.components()
    return HDTensor(
        A @ B,
        A @ B1 + A1 @ B,
        A @ B2 + A2 @ B,
        A @ B12 + A12 @ B + A1 @ B2 + A2 @ B1,
    )


def hdt_map(p: Primitive, a: HDTensor) -> HDTensor:
    """Apply ``p`` elementwise through the second-order chain rule."""
    x = a.re
    if p.domain is not None:
        ok = p.check(x)
        if not np.all(ok):
            bad = tuple(int(i) for i in np.argwhere(~np.asarray(ok))[0])
            raise DomainError(p.name, x[bad] if bad else x, index=bad)
    d1 = p.df(x)
    d2 = p.d2f(x)
    return HDTensor(p.f(x), d1 * a.e1, d1 * a.e2, d1 * a.e12 + d2 * a.e1 * a.e2)


def hdt_reduce_sum(a: HDTensor, axis=None, keepdims=False) -> HDTensor:
    if axis is not None:
        for ax in np.atleast_1d(axis):
            if not -a.ndim <= ax < a.ndim:
                raise ShapeError(f"axis {ax} out of range for shape {a.shape}")
    return a.linear(lambda c: np.sum(c, axis=axis, keepdims=keepdims))


def hdt_logsoftmax_nll(logits: HDTensor, labels) -> HDTensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``).

    ``logits`` has shape ``[..., B, C]``; the result has the leading shape
    ``[...]`` (a 0-d tensor for unbatched input, see ``HDTensor.item``).
    """
    labels = np.asarray(labels)
    if logits.ndim < 2:
        raise ShapeError(f"logits must be [..., B, C], got {logits.shape}")
    n, c = logits.shape[-2:]
    if c < 2:
        raise ShapeError("need at least two classes")
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    shift = logits.re.max(axis=-1, keepdims=True)
    z = logits - shift
    lse = hdt_map(PRIMITIVES["log"], hdt_map(PRIMITIVES["exp"], z).sum(axis=-1))
    idx = np.broadcast_to(labels[:, None], z.shape[:-1] + (1,))
    picked = z.linear(lambda comp: np.take_along_axis(comp, idx, axis=-1)[..., 0])
    return (lse - picked).mean(axis=-1)
