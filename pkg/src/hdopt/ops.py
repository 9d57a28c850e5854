"""Backend-polymorphic building blocks for model code.

Each function accepts a plain numpy array, a tape :class:`~hdopt.reverse.Var`
or an :class:`~hdopt.hyperdual.HDTensor` and returns the same kind.  Image
tensors are channels-last: ``[..., B, H, W, C]``.
"""
from __future__ import annotations

import numpy as np

from . import reverse
from .errors import DomainError, ShapeError
from .hyperdual.number import HyperDual, hd_unary
from .hyperdual.primitives import PRIMITIVES
from .hyperdual.tensor import HDTensor, hdt_logsoftmax_nll
from .reverse import Var


def apply(name, x):
    p = PRIMITIVES[name]
    if isinstance(x, (HDTensor, Var)):
        return x.apply(name)
    if isinstance(x, HyperDual):
        return hd_unary(p, x)
    x = np.asarray(x)
    if not np.all(p.check(x)):
        raise DomainError(p.name, x)
    return p.f(x)


def exp(x):
    return apply("exp", x)


def log(x):
    return apply("log", x)


def tanh(x):
    return apply("tanh", x)


def sigmoid(x):
    return apply("sigmoid", x)


def relu(x):
    return apply("relu", x)


def sqrt(x):
    return apply("sqrt", x)


def sum(x, axis=None):  # noqa: A001
    if isinstance(x, (HDTensor, Var)):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)


def max(x, axis):  # noqa: A001
    if isinstance(x, (HDTensor, Var)):
        return x.max(axis)
    return np.max(x, axis=axis)


def linear_map(x, fn, adjoint):
    """Apply a linear map; ``adjoint`` is only needed for the tape backend."""
    if isinstance(x, HDTensor):
        return x.linear(fn)
    if isinstance(x, Var):
        return x.linear(fn, adjoint)
    return fn(np.asarray(x))


def logsoftmax_nll(logits, labels):
    """Mean negative log-likelihood over the batch axis of ``[..., B, C]`` logits."""
    if isinstance(logits, HDTensor):
        return hdt_logsoftmax_nll(logits, labels)
    if isinstance(logits, Var):
        return reverse.logsoftmax_nll(logits, labels)
    z = np.asarray(logits)
    labels = np.asarray(labels)
    if labels.shape != z.shape[-2:-1]:
        raise ShapeError(f"labels shape {labels.shape} does not match logits {z.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[-1]):
        raise ValueError(f"labels must lie in [0, {z.shape[-1]})")
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, np.broadcast_to(labels[:, None], z.shape[:-1] + (1,)),
                                axis=-1)[..., 0]
    return (lse - picked).mean(axis=-1)


# -- convolution ---------------------------------------------------------------

def _im2col(x, k, pad):
    """``[..., B, H, W, C]`` -> ``[..., B, H*W, k*k*C]`` for stride 1, 'same' padding."""
    *lead, h, w, c = x.shape
    widths = [(0, 0)] * (x.ndim - 3) + [(pad, pad), (pad, pad), (0, 0)]
    xp = np.pad(x, widths)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(-3, -2))
    # win: [..., B, H, W, C, k, k] -> [..., B, H, W, k, k, C]
    win = np.moveaxis(win, -3, -1)
    return win.reshape(tuple(lead) + (h * w, k * k * c))


def _col2im(g, shape, k, pad):
    *lead, h, w, c = shape
    g = g.reshape(tuple(lead) + (h, w, k, k, c))
    out = np.zeros(tuple(lead) + (h + 2 * pad, w + 2 * pad, c), dtype=g.dtype)
    for di in range(k):
        for dj in range(k):
            out[..., di:di + h, dj:dj + w, :] += g[..., di, dj, :]
    return out[..., pad:pad + h, pad:pad + w, :]


def conv2d(x, weight, bias, k=3):
    """Stride-1 'same' convolution via im2col and a single matmul.

    ``weight`` is ``[..., k*k*C_in, C_out]`` (rows ordered kh, kw, C_in) and
    ``bias`` is ``[..., C_out]``; leading parameter-batch axes broadcast
    against the input.
    """
    pad = k // 2
    shape = x.shape
    *lead, h, w, _ = shape
    cols = linear_map(x, lambda a: _im2col(a, k, pad), lambda g: _col2im(g, shape, k, pad))
    if weight.ndim > 2:
        weight = weight.reshape(weight.shape[:-2] + (1,) + weight.shape[-2:])
        bias = bias.reshape(bias.shape[:-1] + (1, 1) + bias.shape[-1:])
    out = cols @ weight + bias
    return out.reshape(out.shape[:-2] + (h, w, out.shape[-1]))


def conv2d_reference(x, weight, bias, k=3):
    """Direct nested-loop convolution on plain arrays (test oracle for :func:`conv2d`)."""
    x = np.asarray(x)
    b, h, w, c = x.shape
    pad = k // 2
    wt = np.asarray(weight).reshape(k, k, c, -1)
    xp = np.pad(x, [(0, 0), (pad, pad), (pad, pad), (0, 0)])
    out = np.zeros((b, h, w, wt.shape[-1]))
    for n in range(b):
        for i in range(h):
            for j in range(w):
                for di in range(k):
                    for dj in range(k):
                        out[n, i, j] += xp[n, i + di, j + dj] @ wt[di, dj]
    return out + np.asarray(bias)


def maxpool2d(x):
    """2x2 max pooling with stride 2 on ``[..., B, H, W, C]`` (odd edges dropped)."""
    *lead, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if (h2 * 2, w2 * 2) != (h, w):
        x = x[..., : h2 * 2, : w2 * 2, :]
    x = x.reshape(tuple(lead) + (h2, 2, w2, 2, c))
    return max(max(x, axis=-2), axis=-3)
