"""Update rules: FGD, FoMoH, FoMoH-BP, FoMoH-KD, SGD and Newton, plus LR schedules.

All step functions minimise.  Each takes ``f(theta) -> scalar`` (models
bound to a batch via ``Model.objective``) and returns ``(theta', StepReport)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import ConfigError
from .hyperdual.derivatives import (
    HESSIAN_CAP,
    batch_eval_tangent_pairs,
    directional_derivative,
    eval_fn_hd,
    hessian_full,
)
from .reverse import grad

METHODS = ("FGD", "FoMoH", "FoMoH-BP", "FoMoH-KD", "SGD", "Newton", "BP")


@dataclass
class SchedulerConfig:
    kind: str = "plateau"          # "step_decay" or "plateau"
    factor: float = 0.1
    period: int = 1000             # step_decay: epochs between reductions
    patience: int = 1              # plateau: increases tolerated before reducing

    def __post_init__(self):
        if self.kind not in ("step_decay", "plateau"):
            raise ConfigError(f"unknown scheduler kind {self.kind!r}")
        if not 0.0 < self.factor < 1.0:
            raise ConfigError(f"scheduler factor must lie in (0, 1), got {self.factor}")
        if self.period < 1 or self.patience < 1:
            raise ConfigError("scheduler period and patience must be >= 1")


@dataclass
class OptimizerConfig:
    method: str
    eta: float
    K: int = 1
    jitter0: float = 1e-6
    jitter_growth: float = 10.0
    max_retries: int = 6
    curv_floor: float = 1e-12
    scheduler: Optional[SchedulerConfig] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if not self.jitter0 > 0:
            raise ConfigError("jitter0 must be positive")
        if isinstance(self.scheduler, dict):
            self.scheduler = SchedulerConfig(**self.scheduler)

    def validate_dim(self, dim):
        if self.method == "FoMoH-KD" and self.K > dim:
            raise ConfigError(f"K={self.K} exceeds the parameter dimension {dim}")

    @property
    def label(self):
        return f"FoMoH-{self.K}D" if self.method == "FoMoH-KD" else self.method


@dataclass
class StepReport:
    loss_before: float = float("nan")
    direction_norm: float = 0.0
    kappa: Optional[np.ndarray] = None
    jitter_used: float = 0.0
    retries: int = 0
    rejected: bool = False
    converged: bool = False
    reason: str = ""


@dataclass
class Jitter:
    """Diagonal jitter policy for the subspace solve."""
    initial: float = 1e-6
    growth: float = 10.0
    max_retries: int = 6

    @classmethod
    def from_config(cls, cfg: OptimizerConfig):
        return cls(cfg.jitter0, cfg.jitter_growth, cfg.max_retries)


def _try_solve(H, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(H, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            return None
    return x if np.all(np.isfinite(x)) else None


def solve_jittered(H, rhs, jitter: Jitter = Jitter()):
    """Solve ``H x = rhs`` (symmetric, possibly indefinite).

    On a singular or ill-conditioned system retry with ``H + j I``, where
    ``j`` starts at ``initial * max(1, ||H||_inf)`` and grows geometrically.
    Returns ``(x or None, jitter_used, retries)``.
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)) or not np.all(np.isfinite(rhs)):
        return None, 0.0, 0
    x = _try_solve(H, rhs)
    if x is not None:
        return x, 0.0, 0
    scale = max(1.0, float(np.abs(H).sum(axis=1).max()))
    j = jitter.initial * scale
    eye = np.eye(len(H))
    for attempt in range(1, jitter.max_retries + 1):
        x = _try_solve(H + j * eye, rhs)
        if x is not None:
            return x, j, attempt
        j *= jitter.growth
    return None, j / jitter.growth, jitter.max_retries


def _normal(rng, shape, dtype):
    return rng.standard_normal(shape).astype(dtype, copy=False)


def fgd_step(f, theta, eta, rng, v=None):
    """Forward gradient descent: ``theta - eta (grad.v) v`` with ``v ~ N(0, I)``."""
    theta = np.asarray(theta)
    if v is None:
        v = _normal(rng, theta.shape, theta.dtype)
    value, dd = directional_derivative(f, theta, v)
    if not (np.isfinite(value) and np.isfinite(dd)):
        return theta, StepReport(value, rejected=True, reason="non-finite evaluation")
    step = (eta * dd) * v
    return theta - step, StepReport(value, float(np.linalg.norm(step)))


def fomoh_step(f, theta, eta, rng, v=None, curv_floor=1e-12):
    """Curvature-normalised line search along a random tangent.

    ``theta - eta * (grad.v) / max(|v^T H v|, floor) * v``; one hyper-dual pass
    gives both terms.  A non-finite pass is retried once with a fresh ``v``.
    """
    theta = np.asarray(theta)
    draw = v is None
    for attempt in range(2 if draw else 1):
        if draw:
            v = _normal(rng, theta.shape, theta.dtype)
        value, d, _, c = eval_fn_hd(f, theta, v, v)
        if np.isfinite(value) and np.isfinite(d) and np.isfinite(c):
            scale = d / max(abs(c), curv_floor)
            step = (eta * scale) * v
            return theta - step, StepReport(value, float(np.linalg.norm(step)),
                                            kappa=np.array([-scale]), retries=attempt)
    return theta, StepReport(value, rejected=True, retries=attempt,
                             reason="non-finite directional derivative or curvature")


def fomoh_bp_step(f, theta, eta, curv_floor=1e-12):
    """Line search along the reverse-mode gradient with curvature from one hyper-dual pass."""
    theta = np.asarray(theta)
    value, g = grad(f, theta)
    gg = float(np.dot(g, g))
    if gg == 0.0:
        return theta, StepReport(value, converged=True, reason="zero gradient")
    _, _, _, c = eval_fn_hd(f, theta, g, g)
    if not (np.isfinite(value) and np.isfinite(gg) and np.isfinite(c)):
        return theta, StepReport(value, rejected=True, reason="non-finite gradient or curvature")
    scale = gg / max(abs(c), curv_floor)
    step = (eta * scale) * g
    return theta - step.astype(theta.dtype), StepReport(value, float(np.linalg.norm(step)),
                                                       kappa=np.array([-scale]))


def hyperplane_direction(f, theta, V, jitter: Jitter = Jitter()):
    """Subspace Newton direction ``sum_k kappa_k V[k]`` with ``H~ kappa = -G~``.

    Returns ``(direction or None, kappa, value, jitter_used, retries)``.
    """
    res = batch_eval_tangent_pairs(f, theta, V)
    if not res.finite:
        return None, None, res.value, 0.0, 0
    kappa, used, retries = solve_jittered(res.H, -res.G, jitter)
    if kappa is None:
        return None, None, res.value, used, retries
    return kappa @ V, kappa, res.value, used, retries


def fomoh_kd_step(f, theta, eta, K, rng, jitter: Jitter = Jitter(), V=None):
    """Hyperplane search in the span of ``K`` random tangents."""
    theta = np.asarray(theta)
    if V is None:
        V = _normal(rng, (K, theta.shape[-1]), theta.dtype)
    direction, kappa, value, used, retries = hyperplane_direction(f, theta, V, jitter)
    if direction is None:
        return theta, StepReport(value, kappa=kappa, jitter_used=used, retries=retries,
                                 rejected=True, reason="subspace system unsolvable or non-finite")
    step = eta * direction
    return (theta + step.astype(theta.dtype),
            StepReport(value, float(np.linalg.norm(step)), kappa, used, retries))


def newton_step(f, theta, eta, jitter: Jitter = Jitter(), cap=HESSIAN_CAP):
    """Dense Newton step ``theta - eta H^{-1} g`` with the same jitter fallback."""
    theta = np.asarray(theta)
    value, g = grad(f, theta)
    H = hessian_full(f, theta, cap=cap)
    x, used, retries = solve_jittered(H, -g, jitter)
    if x is None:
        return theta, StepReport(value, jitter_used=used, retries=retries, rejected=True,
                                 reason="Hessian singular after jitter retries")
    step = eta * x
    return theta + step, StepReport(value, float(np.linalg.norm(step)),
                                    jitter_used=used, retries=retries)


def sgd_step(f, theta, eta):
    """Plain gradient step from reverse mode (the backpropagation baseline)."""
    theta = np.asarray(theta)
    value, g = grad(f, theta)
    if not (np.isfinite(value) and np.all(np.isfinite(g))):
        return theta, StepReport(value, rejected=True, reason="non-finite gradient")
    step = eta * g
    return theta - step.astype(theta.dtype), StepReport(value, float(np.linalg.norm(step)))


def make_step(cfg: OptimizerConfig):
    """Return ``step(f, theta, eta, rng) -> (theta', StepReport)`` for a config."""
    jit = Jitter.from_config(cfg)
    m = cfg.method
    if m == "FGD":
        return lambda f, th, eta, rng: fgd_step(f, th, eta, rng)
    if m == "FoMoH":
        return lambda f, th, eta, rng: fomoh_step(f, th, eta, rng, curv_floor=cfg.curv_floor)
    if m == "FoMoH-BP":
        return lambda f, th, eta, rng: fomoh_bp_step(f, th, eta, curv_floor=cfg.curv_floor)
    if m == "FoMoH-KD":
        return lambda f, th, eta, rng: fomoh_kd_step(f, th, eta, cfg.K, rng, jit)
    if m == "Newton":
        return lambda f, th, eta, rng: newton_step(f, th, eta, jit)
    return lambda f, th, eta, rng: sgd_step(f, th, eta)


@dataclass
class LRScheduler:
    """Learning-rate schedule evaluated once per epoch.

    ``step_decay`` multiplies by ``factor`` every ``period`` epochs.
    ``plateau`` multiplies by ``factor`` whenever the monitored metric rises
    above the best value seen (``patience`` consecutive rises, default 1).
    """
    eta: float
    config: SchedulerConfig
    best: float = float("inf")
    bad_epochs: int = 0
    history: list = field(default_factory=list)

    def step(self, epoch, metric=None):
        cfg = self.config
        if cfg.kind == "step_decay":
            if epoch > 0 and epoch % cfg.period == 0:
                self.eta *= cfg.factor
        elif metric is not None and np.isfinite(metric):
            if metric < self.best:
                self.best = metric
                self.bad_epochs = 0
            else:
                self.bad_epochs += 1
                if self.bad_epochs >= cfg.patience:
                    self.eta *= cfg.factor
                    self.bad_epochs = 0
        self.history.append(self.eta)
        return self.eta


def scheduler_step(state: LRScheduler, epoch, metric=None):
    return state.step(epoch, metric)
