"""Objective functions: flat parameter vector in, scalar loss out.

Every loss accepts parameters as a numpy array, a tape ``Var`` or an
``HDTensor`` and broadcasts over leading axes, so ``[N, D]`` parameters
give ``[N]`` losses (used for batched tangent-pair evaluation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class DatasetBatch:
    inputs: np.ndarray     # [B, features]
    labels: np.ndarray     # [B] class indices

    def __post_init__(self):
        if self.inputs.ndim != 2 or len(self.inputs) < 1:
            raise ShapeError(f"inputs must be [B>=1, features], got {self.inputs.shape}")
        if self.labels.shape != (len(self.inputs),):
            raise ShapeError(f"labels shape {self.labels.shape} does not match {len(self.inputs)} inputs")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return DatasetBatch(self.inputs[idx], self.labels[idx])


@dataclass(frozen=True)
class ParamBlock:
    name: str
    shape: tuple
    fan_in: int
    offset: int

    @property
    def size(self):
        return math.prod(self.shape)

    def take(self, params):
        """Slice this block out of a (possibly batched) parameter vector."""
        lead = params.shape[:-1]
        return params[..., self.offset:self.offset + self.size].reshape(lead + self.shape)


@dataclass(frozen=True)
class Model:
    name: str
    dim: int
    loss: Callable
    accuracy: Optional[Callable] = None
    blocks: tuple = ()
    init: Optional[Callable] = None
    # analytic oracles where available (Rosenbrock, quadratics)
    gradient: Optional[Callable] = None
    hessian: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __call__(self, params, batch=None):
        return self.loss(params, batch)

    def objective(self, batch=None):
        """Bind a batch, returning ``f(params) -> loss``."""
        return lambda params: self.loss(params, batch)


def _layout(spec):
    blocks, offset = [], 0
    for name, shape, fan_in in spec:
        blocks.append(ParamBlock(name, tuple(shape), fan_in, offset))
        offset += blocks[-1].size
    return tuple(blocks), offset


def init_params(model: Model, seed, dtype=np.float64):
    """Fan-in scaled uniform initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(seed)
    if model.init is not None:
        return np.asarray(model.init(rng), dtype=dtype)
    theta = np.empty(model.dim)
    for blk in model.blocks:
        bound = math.sqrt(1.0 / blk.fan_in)
        theta[blk.offset:blk.offset + blk.size] = rng.uniform(-bound, bound, blk.size)
    return theta.astype(dtype)


# -- Rosenbrock ----------------------------------------------------------------

def rosenbrock(d: int) -> Model:
    """``sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``; starts drawn from U[-2, 2]^d."""
    if d < 2:
        raise ConfigError("Rosenbrock needs d >= 2")

    def loss(theta, batch=None):
        x = theta[..., :-1]
        y = theta[..., 1:]
        return ops.sum(100.0 * (y - x ** 2) ** 2 + (1.0 - x) ** 2, axis=-1)

    def gradient(theta):
        x = np.asarray(theta, dtype=np.float64)
        g = np.zeros_like(x)
        r = x[1:] - x[:-1] ** 2
        g[:-1] += -400.0 * x[:-1] * r - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * r
        return g

    def hessian(theta):
        x = np.asarray(theta, dtype=np.float64)
        H = np.zeros((d, d))
        i = np.arange(d - 1)
        H[i, i] += 1200.0 * x[:-1] ** 2 - 400.0 * x[1:] + 2.0
        H[i + 1, i + 1] += 200.0
        H[i, i + 1] = H[i + 1, i] = -400.0 * x[:-1]
        return H

    return Model(f"rosenbrock{d}", d, loss, init=lambda rng: rng.uniform(-2.0, 2.0, d),
                 gradient=gradient, hessian=hessian)


def quadratic(A, b=None) -> Model:
    """``0.5 theta^T A theta - b^T theta`` for symmetric ``A``."""
    A = np.asarray(A, dtype=np.float64)
    d = A.shape[0]
    b = np.zeros(d) if b is None else np.asarray(b, dtype=np.float64)

    def loss(theta, batch=None):
        return 0.5 * ops.sum(theta * (theta @ A), axis=-1) - theta @ b

    return Model(f"quadratic{d}", d, loss,
                 init=lambda rng: rng.standard_normal(d),
                 gradient=lambda t: A @ np.asarray(t) - b,
                 hessian=lambda t: A.copy(),
                 meta={"A": A, "b": b})


# -- classifiers ---------------------------------------------------------------

def _classifier(name, blocks, dim, logits_fn, meta):
    def loss(theta, batch):
        return ops.logsoftmax_nll(logits_fn(theta, batch.inputs), batch.labels)

    def accuracy(theta, batch):
        z = logits_fn(np.asarray(theta), batch.inputs)
        return float(np.mean(np.argmax(z, axis=-1) == batch.labels))

    return Model(name, dim, loss, accuracy, blocks, meta=meta)


def _as_input(x, theta):
    return np.asarray(x, dtype=theta.dtype)


def mlp(layer_sizes) -> Model:
    """Fully connected ReLU network ending in softmax NLL."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"invalid layer sizes {layer_sizes}")
    spec = []
    for i, (fin, fout) in enumerate(zip(sizes[:-1], sizes[1:])):
        spec += [(f"W{i}", (fin, fout), fin), (f"b{i}", (fout,), fin)]
    blocks, dim = _layout(spec)
    n_layers = len(sizes) - 1

    def logits(theta, x):
        h = _as_input(x, theta)
        for i in range(n_layers):
            W, b = blocks[2 * i].take(theta), blocks[2 * i + 1].take(theta)
            if b.ndim > 1:
                b = b.reshape(b.shape[:-1] + (1,) + b.shape[-1:])
            h = h @ W + b
            if i < n_layers - 1:
                h = ops.relu(h)
        return h

    return _classifier(f"mlp{'-'.join(map(str, sizes))}", blocks, dim, logits,
                       {"layer_sizes": sizes})


def logistic_regression(features: int = 784, classes: int = 10) -> Model:
    m = mlp([features, classes])
    return Model("logreg", m.dim, m.loss, m.accuracy, m.blocks, meta=m.meta)


def cnn_small(image_shape=(28, 28, 1), channels=(8, 16), hidden=64, classes=10) -> Model:
    """Two 3x3 'same' conv layers, each followed by ReLU and 2x2 max-pool, then one
    hidden dense layer.  52,138 parameters at the MNIST defaults.
    """
    h, w, c_in = image_shape
    c1, c2 = channels
    h_out, w_out = h // 2 // 2, w // 2 // 2
    flat = h_out * w_out * c2
    if flat < 1:
        raise ConfigError(f"image {image_shape} too small for two pooling stages")
    spec = [
        ("conv1_w", (9 * c_in, c1), 9 * c_in), ("conv1_b", (c1,), 9 * c_in),
        ("conv2_w", (9 * c1, c2), 9 * c1), ("conv2_b", (c2,), 9 * c1),
        ("fc1_w", (flat, hidden), flat), ("fc1_b", (hidden,), flat),
        ("fc2_w", (hidden, classes), hidden), ("fc2_b", (classes,), hidden),
    ]
    blocks, dim = _layout(spec)
    by_name = {blk.name: blk for blk in blocks}

    def logits(theta, x):
        x = _as_input(x, theta)
        z = x.reshape((len(x), h, w, c_in))
        for layer in ("conv1", "conv2"):
            z = ops.conv2d(z, by_name[layer + "_w"].take(theta), by_name[layer + "_b"].take(theta))
            z = ops.maxpool2d(ops.relu(z))
        z = z.reshape(z.shape[:-3] + (flat,))
        for layer, act in (("fc1", True), ("fc2", False)):
            W, b = by_name[layer + "_w"].take(theta), by_name[layer + "_b"].take(theta)
            if b.ndim > 1:
                b = b.reshape(b.shape[:-1] + (1,) + b.shape[-1:])
            z = z @ W + b
            if act:
                z = ops.relu(z)
        return z

    return _classifier("cnn_small", blocks, dim, logits,
                       {"image_shape": image_shape, "channels": channels, "hidden": hidden})


def build_model(spec: dict) -> Model:
    """Construct a model from a config mapping such as ``{"kind": "mlp", "layers": [...]}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "rosenbrock":
        return rosenbrock(int(spec.get("dim", 2)))
    if kind in ("logreg", "logistic_regression"):
        return logistic_regression(int(spec.get("features", 784)), int(spec.get("classes", 10)))
    if kind == "mlp":
        return mlp(spec["layers"])
    if kind == "cnn_small":
        return cnn_small(tuple(spec.get("image_shape", (28, 28, 1))),
                         tuple(spec.get("channels", (8, 16))),
                         int(spec.get("hidden", 64)), int(spec.get("classes", 10)))
    raise ConfigError(f"unknown model kind {kind!r}")
