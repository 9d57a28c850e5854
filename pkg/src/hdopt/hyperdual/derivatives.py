"""Derivative queries built on hyper-dual evaluation.

Functions passed here take a parameter vector and return a scalar.  For the
batched routines they must also broadcast over leading axes: given an
``HDTensor`` of shape ``[N, D]`` they return shape ``[N]``.  All models in
:mod:`hdopt.models` follow that convention.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import ContractError, ShapeError, SizeError
from .number import HyperDual
from .tensor import HDTensor

HESSIAN_CAP = 256
# parameter-vector entries per batched forward pass
_CHUNK_ELEMS = 1 << 22


class PairEvaluation(NamedTuple):
    G: np.ndarray          # directional derivatives along each tangent, [K]
    H: np.ndarray          # subspace Hessian V H V^T, [K, K]
    value: float
    finite: bool


def _as_float(x):
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(np.float64)


def _scalar_out(out):
    if isinstance(out, HyperDual):
        return out.as_tuple()
    if isinstance(out, HDTensor):
        if out.size != 1:
            raise ContractError(f"function returned shape {out.shape}, expected a scalar")
        return out.item().as_tuple()
    raise ContractError(f"function returned {type(out).__name__}, expected a hyper-dual scalar")


def eval_fn_hd(f, theta, v1, v2):
    """One forward pass of ``f`` at ``theta + v1*eps1 + v2*eps2``.

    Returns ``(f(theta), grad.v1, grad.v2, v1^T H v2)``.
    """
    theta = _as_float(theta)
    v1 = np.broadcast_to(np.asarray(v1, dtype=theta.dtype), theta.shape)
    v2 = np.broadcast_to(np.asarray(v2, dtype=theta.dtype), theta.shape)
    return tuple(float(c) for c in _scalar_out(f(HDTensor(theta, v1, v2))))


def directional_derivative(f, theta, v):
    """First-order forward mode: ``(f(theta), grad.v)``."""
    value, dd, _, _ = eval_fn_hd(f, theta, v, 0.0)
    return value, dd


def _check_index(i, d):
    if not 0 <= i < d:
        raise IndexError(f"index {i} out of range for dimension {d}")


def extract_hessian_element(f, theta, i, j):
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.shape[-1]
    _check_index(i, d)
    _check_index(j, d)
    eye = np.eye(d)
    return eval_fn_hd(f, theta, eye[i], eye[j])[3]


def eval_pairs(f, theta, V1, V2, chunk=None):
    """Evaluate ``f`` on a batch of tangent pairs; returns ``(z0, z1, z2, z12)``.

    Row ``n`` of the outputs corresponds to the pair ``(V1[n], V2[n])``.
    """
    theta = _as_float(theta)
    V1 = np.asarray(V1, dtype=theta.dtype)
    V2 = np.asarray(V2, dtype=theta.dtype)
    n, d = V1.shape
    if V2.shape != (n, d) or theta.shape != (d,):
        raise ShapeError(f"tangent batch {V1.shape}/{V2.shape} does not match theta {theta.shape}")
    if chunk is None:
        chunk = max(1, _CHUNK_ELEMS // max(d, 1))
    outs = []
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        m = V1[sl].shape[0]
        x = HDTensor(np.broadcast_to(theta, (m, d)), V1[sl], V2[sl])
        out = f(x)
        if not isinstance(out, HDTensor) or out.shape != (m,):
            raise ContractError(
                "batched evaluation must map [N, D] to [N]; got "
                f"{getattr(out, 'shape', type(out).__name__)}")
        outs.append(out)
    return tuple(np.concatenate([getattr(o, name) for o in outs])
                 for name in ("re", "e1", "e2", "e12"))


def upper_pairs(k):
    """Row-major ``(i, j)`` pairs with ``i <= j`` (the canonical pair order)."""
    ii, jj = np.triu_indices(k)
    return ii, jj


def hessian_full(f, theta, cap=HESSIAN_CAP, batched=True):
    """Dense Hessian from ``D(D+1)/2`` pair evaluations (upper triangle, mirrored)."""
    theta = np.asarray(theta, dtype=np.float64)
    d = theta.shape[-1]
    if d > cap:
        raise SizeError(f"dimension {d} exceeds the dense Hessian cap {cap}; "
                        "use a subspace method (batch_eval_tangent_pairs) instead")
    ii, jj = upper_pairs(d)
    if batched:
        eye = np.eye(d)
        z12 = eval_pairs(f, theta, eye[ii], eye[jj])[3]
    else:
        z12 = np.array([extract_hessian_element(f, theta, i, j) for i, j in zip(ii, jj)])
    H = np.empty((d, d))
    H[ii, jj] = z12
    H[jj, ii] = z12
    return H


def hvp_forward(f, theta, w, cap=HESSIAN_CAP, batched=True):
    """Hessian-vector product: ``D`` passes with tangents ``(w, e_j)``."""
    theta = np.asarray(theta, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d = theta.shape[-1]
    if d > cap:
        raise SizeError(f"dimension {d} exceeds the cap {cap}")
    eye = np.eye(d)
    if batched:
        return eval_pairs(f, theta, np.broadcast_to(w, (d, d)), eye)[3]
    return np.array([eval_fn_hd(f, theta, w, eye[j])[3] for j in range(d)])


def batch_eval_tangent_pairs(f, theta, V) -> PairEvaluation:
    """Gradient and Hessian projected onto the rows of ``V`` in one batched pass.

    The ``K(K+1)/2`` pairs are laid out row-major over ``i <= j``.  ``G[i]``
    is read from the diagonal pair ``(i, i)``.
    """
    theta = _as_float(theta)
    V = np.atleast_2d(np.asarray(V, dtype=theta.dtype))
    k = V.shape[0]
    if k < 1:
        raise ShapeError("need at least one tangent vector")
    ii, jj = upper_pairs(k)
    z0, z1, _, z12 = eval_pairs(f, theta, V[ii], V[jj])
    H = np.empty((k, k), dtype=z12.dtype)
    H[ii, jj] = z12
    H[jj, ii] = z12
    G = z1[ii == jj]
    finite = bool(np.all(np.isfinite(G)) and np.all(np.isfinite(H)) and np.isfinite(z0[0]))
    return PairEvaluation(G, H, float(z0[0]), finite)
