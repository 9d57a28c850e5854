"""Minimal tape-based reverse-mode AD for scalar losses.

Nodes hold numpy arrays.  Each recorded operation stores its input node
indices and a closure mapping the output adjoint to input adjoints; one
reverse sweep over the tape yields the gradient.  A fresh tape is built for
every evaluation.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError, ShapeError
from .hyperdual.derivatives import directional_derivative
from .hyperdual.primitives import PRIMITIVES, power


class Tape:
    def __init__(self):
        self.nodes = []    # (op name, input indices, backward closure)
        self.values = []

    def __len__(self):
        return len(self.nodes)

    def variable(self, value):
        return self.record("input", (), np.asarray(value), None)

    def record(self, op, inputs, value, backward):
        idx = tuple(v.index for v in inputs)
        if any(i >= len(self.nodes) for i in idx):
            raise RuntimeError("tape inputs must precede their consumers")
        self.nodes.append((op, idx, backward))
        self.values.append(value)
        return Var(self, len(self.nodes) - 1)

    def backward(self, out: "Var"):
        """Reverse sweep seeded with adjoint 1 at ``out``; returns per-node adjoints."""
        adj = [None] * len(self.nodes)
        adj[out.index] = np.ones_like(self.values[out.index])
        for n in range(out.index, -1, -1):
            g = adj[n]
            op, idx, bwd = self.nodes[n]
            if g is None or bwd is None:
                continue
            for i, gi in zip(idx, bwd(g)):
                if gi is None:
                    continue
                adj[i] = gi if adj[i] is None else adj[i] + gi
        return adj


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    """An array-valued node on a :class:`Tape`."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.values[self.index]

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"

    def _rec(self, op, inputs, value, backward):
        return self.tape.record(op, inputs, value, backward)

    # -- structural ops --------------------------------------------------------
    def __getitem__(self, idx):
        shape = self.shape

        def bwd(g):
            out = np.zeros(shape, dtype=g.dtype)
            np.add.at(out, idx, g)
            return (out,)
        return self._rec("getitem", (self,), self.value[idx], bwd)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return self._rec("reshape", (self,), self.value.reshape(shape), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        inv = np.argsort(axes)
        return self._rec("transpose", (self,), self.value.transpose(*axes),
                         lambda g: (g.transpose(*inv),))

    def linear(self, fn, adjoint, op="linear"):
        """Record a linear map ``fn`` whose transpose is ``adjoint``."""
        return self._rec(op, (self,), fn(self.value), lambda g: (adjoint(g),))

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)
        return self._rec("sum", (self,), np.sum(self.value, axis=axis, keepdims=keepdims), bwd)

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis, keepdims) * (1.0 / n)

    def max(self, axis):
        x = self.value
        idx = np.expand_dims(np.argmax(x, axis=axis), axis)
        out = np.take_along_axis(x, idx, axis=axis).squeeze(axis)

        def bwd(g):
            gx = np.zeros_like(x)
            np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
            return (gx,)
        return self._rec("max", (self,), out, bwd)

    def apply(self, name):
        return unary(PRIMITIVES[name], self)

    # -- arithmetic ------------------------------------------------------------
    def _binary(self, other, op, value_fn, grad_a, grad_b):
        if isinstance(other, Var):
            a, b = self.value, other.value
            out = value_fn(a, b)

            def bwd(g):
                return (_unbroadcast(grad_a(g, a, b), a.shape), _unbroadcast(grad_b(g, a, b), b.shape))
            return self._rec(op, (self, other), out, bwd)
        if isinstance(other, (int, float, np.ndarray, np.number)):
            a, b = self.value, np.asarray(other)
            out = value_fn(a, b)
            return self._rec(op, (self,), out, lambda g: (_unbroadcast(grad_a(g, a, b), a.shape),))
        return NotImplemented

    def _rbinary(self, other, op, value_fn, grad_b):
        if isinstance(other, (int, float, np.ndarray, np.number)):
            a, b = np.asarray(other), self.value
            out = value_fn(a, b)
            return self._rec(op, (self,), out, lambda g: (_unbroadcast(grad_b(g, a, b), b.shape),))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, "add", np.add, lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, "sub", np.subtract, lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return self._rbinary(other, "sub", np.subtract, lambda g, a, b: -g)

    def __mul__(self, other):
        return self._binary(other, "mul", np.multiply, lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * unary(PRIMITIVES["recip"], other)
        if np.any(np.asarray(other) == 0):
            raise ZeroDivisionError("division by zero")
        return self._binary(other, "div", np.divide, lambda g, a, b: g / b, None)

    def __rtruediv__(self, other):
        return unary(PRIMITIVES["recip"], self) * other

    def __neg__(self):
        return self._rec("neg", (self,), -self.value, lambda g: (-g,))

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            return (exponent * self.apply("log")).apply("exp")
        return unary(power(exponent), self)

    def __abs__(self):
        return self.apply("abs")

    def __matmul__(self, other):
        return self._binary(other, "matmul", np.matmul,
                            lambda g, a, b: _matmul_vjp(g, a, b)[0],
                            lambda g, a, b: _matmul_vjp(g, a, b)[1])

    def __rmatmul__(self, other):
        return self._rbinary(other, "matmul", np.matmul, lambda g, a, b: _matmul_vjp(g, a, b)[1])


def _matmul_vjp(g, a, b):
    """Adjoints of ``a @ b`` with numpy's 1-d promotion rules."""
    a2 = a[None, :] if a.ndim == 1 else a
    b2 = b[:, None] if b.ndim == 1 else b
    g2 = np.asarray(g)
    if b.ndim == 1:
        g2 = np.expand_dims(g2, -1)
    if a.ndim == 1:
        g2 = np.expand_dims(g2, -2)
    ga = g2 @ np.swapaxes(b2, -1, -2)
    gb = np.swapaxes(a2, -1, -2) @ g2
    if a.ndim == 1:
        ga = ga[..., 0, :]
    if b.ndim == 1:
        gb = gb[..., 0]
    return ga, gb


def unary(p, x: Var) -> Var:
    v = x.value
    ok = p.check(v)
    if not np.all(ok):
        bad = tuple(int(i) for i in np.argwhere(~np.asarray(ok))[0])
        raise DomainError(p.name, v[bad] if bad else v, index=bad)
    d1 = p.df(v)
    return x._rec(p.name, (x,), p.f(v), lambda g: (g * d1,))


def logsoftmax_nll(logits: Var, labels) -> Var:
    """Mean NLL over the batch axis (second to last) as a single fused node."""
    z = logits.value
    labels = np.asarray(labels)
    n, c = z.shape[-2:]
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    idx = np.broadcast_to(labels[:, None], z.shape[:-1] + (1,))
    picked = np.take_along_axis(shifted, idx, axis=-1)[..., 0]
    out = (lse - picked).mean(axis=-1)

    def bwd(g):
        soft = np.exp(shifted - lse[..., None])
        np.put_along_axis(soft, idx, np.take_along_axis(soft, idx, axis=-1) - 1.0, axis=-1)
        return (soft * (np.asarray(g)[..., None, None] / n),)
    return logits._rec("logsoftmax_nll", (logits,), out, bwd)


def grad(f, theta):
    """Value and gradient of a scalar function from one forward and one reverse sweep."""
    tape = Tape()
    x = tape.variable(np.asarray(theta, dtype=np.float64) if np.asarray(theta).dtype.kind != "f"
                      else np.asarray(theta))
    out = f(x)
    if not isinstance(out, Var):
        value = np.asarray(out)
        if value.size != 1:
            raise ContractError(f"loss must be scalar, got shape {value.shape}")
        return float(value), np.zeros_like(x.value)
    if out.size != 1:
        raise ContractError(f"loss must be scalar, got shape {out.shape}")
    adj = tape.backward(out)
    g = adj[x.index]
    return float(out.value), (np.zeros_like(x.value) if g is None else g)


def jvp_crosscheck(f, theta, v):
    """Directional derivative along ``v`` from forward mode and from ``grad(f).v``."""
    _, forward_dd = directional_derivative(f, theta, v)
    _, g = grad(f, theta)
    return forward_dd, float(np.dot(g, v))
