"""Trajectory execution: MNIST-style training runs, the Rosenbrock suite and
the single-step study.

Each seed owns two counter-based (Philox) streams derived from the seed: one
for data shuffles, one for tangent sampling.  Shuffles therefore depend only
on the seed and batch size, so methods compared under one seed see the same
batch order.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..models import DatasetBatch, Model, build_model, init_params, rosenbrock
from ..optimizers import (
    Jitter,
    LRScheduler,
    OptimizerConfig,
    fgd_step,
    fomoh_kd_step,
    fomoh_step,
    make_step,
    newton_step,
)
from .config import ExperimentConfig, MethodSpec, RosenbrockConfig

DTYPES = {"f32": np.float32, "f64": np.float64}
_NAN = float("nan")


def trajectory_streams(seed: int):
    """``(data_rng, tangent_rng)``: independent Philox generators for one seed."""
    data_ss, tangent_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(data_ss)), np.random.Generator(np.random.Philox(tangent_ss))


@dataclass
class RunRecord:
    seed: int
    iter: int
    train_loss: float
    val_loss: float = _NAN
    train_acc: float = _NAN
    val_acc: float = _NAN
    eta: float = _NAN
    wall_ms: float = 0.0
    jitter: float = 0.0
    retries: int = 0


@dataclass
class Trajectory:
    label: str
    seed: int
    records: List[RunRecord] = field(default_factory=list)
    aborted: bool = False
    diagnostic: str = ""

    @property
    def final(self) -> Optional[RunRecord]:
        return self.records[-1] if self.records else None


@dataclass
class ExperimentResult:
    trajectories: Dict[str, List[Trajectory]]
    summary: dict
    curves: Dict[str, np.ndarray] = field(default_factory=dict)


def evaluate(model: Model, theta, data: DatasetBatch, chunk: int = 2000):
    """Mean loss and accuracy over ``data`` with the plain-array backend."""
    n = len(data)
    loss = acc = 0.0
    for s in range(0, n, chunk):
        part = data.subset(slice(s, s + chunk))
        w = len(part) / n
        loss += w * float(model.loss(theta, part))
        acc += w * model.accuracy(theta, part)
    return loss, acc


def _epoch_record(model, theta, seed, epoch, train, val, eta, wall_ms, jitter, retries):
    tr_loss, tr_acc = evaluate(model, theta, train)
    va_loss, va_acc = evaluate(model, theta, val) if val is not None else (_NAN, _NAN)
    return RunRecord(seed, epoch, tr_loss, va_loss, tr_acc, va_acc, eta, wall_ms, jitter, retries)


def train_trajectory(model: Model, spec: MethodSpec, train: DatasetBatch,
                     val: Optional[DatasetBatch], epochs: int, seed: int,
                     dtype=np.float32, record_wall_time=True,
                     abort_reject_fraction=0.5) -> Trajectory:
    """One seed of mini-batch training; a record per epoch plus the initial state."""
    cfg = spec.optimizer
    step = make_step(cfg)
    data_rng, tangent_rng = trajectory_streams(seed)
    theta = init_params(model, seed, dtype)
    eta = cfg.eta
    sched = LRScheduler(eta, cfg.scheduler) if cfg.scheduler else None
    traj = Trajectory(spec.label, seed)
    traj.records.append(_epoch_record(model, theta, seed, 0, train, val, eta, 0.0, 0.0, 0))
    n = len(train)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        perm = data_rng.permutation(n)
        rejected = steps = retries = 0
        jitter = 0.0
        for s in range(0, n, spec.batch_size):
            batch = train.subset(perm[s:s + spec.batch_size])
            theta, rep = step(model.objective(batch), theta, eta, tangent_rng)
            steps += 1
            rejected += rep.rejected
            retries += rep.retries
            jitter = max(jitter, rep.jitter_used)
        wall = (time.perf_counter() - t0) * 1e3 if record_wall_time else 0.0
        rec = _epoch_record(model, theta, seed, epoch, train, val, eta, wall, jitter, retries)
        traj.records.append(rec)
        if rejected > abort_reject_fraction * steps:
            traj.aborted = True
            traj.diagnostic = (f"epoch {epoch}: {rejected}/{steps} steps rejected "
                               f"(limit {abort_reject_fraction:.0%}); seed aborted")
            break
        if sched is not None:
            metric = rec.val_loss if val is not None else rec.train_loss
            eta = sched.step(epoch, metric)
    return traj


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"mean": None, "std": None}
    return {"mean": float(arr.mean()), "std": float(arr.std())}


METRICS = ("train_loss", "val_loss", "train_acc", "val_acc")


def summarize(trajectories: Dict[str, List[Trajectory]]) -> dict:
    """Mean and (population) std of the final-epoch metrics per method."""
    out = {}
    for label, trajs in trajectories.items():
        finals = [t.final for t in trajs if t.final is not None]
        entry = {m: _mean_std([getattr(r, m) for r in finals]) for m in METRICS}
        entry["best_val_acc"] = _mean_std([max(r.val_acc for r in t.records) for t in trajs])
        entry["seeds"] = [t.seed for t in trajs]
        entry["epochs"] = [t.final.iter for t in trajs]
        entry["aborted"] = {str(t.seed): t.diagnostic for t in trajs if t.aborted}
        out[label] = entry
    return out


def run_experiment(cfg: ExperimentConfig, train: DatasetBatch,
                   val: Optional[DatasetBatch] = None) -> ExperimentResult:
    """Run every configured method for every seed on the given data."""
    model = build_model(cfg.model)
    dtype = DTYPES[cfg.precision]
    train = DatasetBatch(train.inputs.astype(dtype, copy=False), train.labels)
    if val is not None:
        val = DatasetBatch(val.inputs.astype(dtype, copy=False), val.labels)
    trajectories = {}
    for spec in cfg.methods:
        trajectories[spec.label] = [
            train_trajectory(model, spec, train, val, cfg.epochs, seed, dtype,
                             cfg.record_wall_time, cfg.abort_reject_fraction)
            for seed in cfg.seeds
        ]
    return ExperimentResult(trajectories, summarize(trajectories))


# -- Rosenbrock ----------------------------------------------------------------

def rosenbrock_starts(dim: int, seeds: Sequence[int]) -> np.ndarray:
    """Shared starting points: one ``U[-2, 2]^dim`` draw per seed."""
    model = rosenbrock(dim)
    return np.stack([init_params(model, s) for s in seeds])


def _method_config(label: str, eta: float) -> OptimizerConfig:
    if label.startswith("FoMoH-") and label.endswith("D") and label[6:-1].isdigit():
        return OptimizerConfig("FoMoH-KD", eta, K=int(label[6:-1]))
    return OptimizerConfig(label, eta)


def rosenbrock_trajectory(dim: int, label: str, start, seed: int, iterations: int,
                          eta: float, stop_below: Optional[float] = None,
                          step_tol: float = 1e-12) -> Trajectory:
    """Per-iteration objective values for one method from one start.

    Stops early when ``f < stop_below`` or the step norm drops below
    ``step_tol``; the remaining iterations are not recorded.
    """
    model = rosenbrock(dim)
    f = model.objective()
    step = make_step(_method_config(label, eta))
    _, rng = trajectory_streams(seed)
    theta = np.array(start, dtype=np.float64)
    value = float(f(theta))
    traj = Trajectory(label, seed, [RunRecord(seed, 0, value, eta=eta)])
    for it in range(1, iterations + 1):
        theta, rep = step(f, theta, eta, rng)
        value = float(f(theta))
        traj.records.append(RunRecord(seed, it, value, eta=eta, jitter=rep.jitter_used,
                                      retries=rep.retries))
        if not math.isfinite(value):
            traj.aborted, traj.diagnostic = True, f"iteration {it}: non-finite objective"
            break
        if (stop_below is not None and value < stop_below) or rep.converged \
                or (not rep.rejected and rep.direction_norm < step_tol):
            break
    return traj


def loss_matrix(trajs: Sequence[Trajectory], iterations: int) -> np.ndarray:
    """``[seeds, iterations + 1]`` objective values; early-stopped runs hold their last value."""
    out = np.empty((len(trajs), iterations + 1))
    for row, t in zip(out, trajs):
        vals = np.array([r.train_loss for r in t.records])
        row[:len(vals)] = vals
        row[len(vals):] = vals[-1]
    return out


def iterations_to(trajs: Sequence[Trajectory], threshold: float) -> np.ndarray:
    """First iteration with ``f < threshold`` per seed (``inf`` if never reached)."""
    hits = []
    for t in trajs:
        its = [r.iter for r in t.records if r.train_loss < threshold]
        hits.append(float(its[0]) if its else math.inf)
    return np.array(hits)


def suite_methods(dim: int, cfg: RosenbrockConfig) -> List[str]:
    if dim == 2:
        return list(cfg.methods_2d)
    return [f"FoMoH-{k}D" for k in cfg.ks_10d if k <= dim] + ["Newton"]


def run_rosenbrock_suite(cfg: RosenbrockConfig = RosenbrockConfig(),
                         methods: Optional[Dict[int, Sequence[str]]] = None) -> Dict[int, ExperimentResult]:
    """All methods from the same per-seed starting points, per dimension.

    D=2 compares the methods in ``cfg.methods_2d``; any other dimension runs
    FoMoH-KD for ``K`` in ``cfg.ks_10d`` plus Newton.  Median curves are the
    per-iteration median over seeds.
    """
    results = {}
    for dim in cfg.dims:
        starts = rosenbrock_starts(dim, cfg.seeds)
        labels = list(methods[dim]) if methods and dim in methods else suite_methods(dim, cfg)
        trajectories, curves, summary = {}, {}, {}
        for label in labels:
            eta = float(cfg.etas.get(label, 1.0))
            trajs = [rosenbrock_trajectory(dim, label, start, seed, cfg.iterations, eta,
                                           cfg.stop_below)
                     for seed, start in zip(cfg.seeds, starts)]
            trajectories[label] = trajs
            losses = loss_matrix(trajs, cfg.iterations)
            curves[label] = np.median(losses, axis=0)
            hits = iterations_to(trajs, cfg.threshold)
            summary[label] = {
                "eta": eta,
                "median_iters_to_threshold": float(np.median(hits)),
                "iters_to_threshold": [None if math.isinf(h) else int(h) for h in hits],
                "median_final_loss": float(curves[label][-1]),
                "aborted": {str(t.seed): t.diagnostic for t in trajs if t.aborted},
            }
        results[dim] = ExperimentResult(trajectories, {"dim": dim, "threshold": cfg.threshold,
                                                       "methods": summary}, curves)
    return results


# -- single-step study ---------------------------------------------------------

@dataclass
class SingleStepStudy:
    point: np.ndarray
    gradient: np.ndarray
    newton: np.ndarray                  # the descent step -H^{-1} g
    steps: Dict[str, np.ndarray]        # method -> [n_samples, 2] sampled steps

    def mean(self, method):
        return self.steps[method].mean(axis=0)

    def summary(self) -> dict:
        g = self.gradient
        out = {"point": self.point.tolist(), "gradient": g.tolist(), "newton_step": self.newton.tolist()}
        for name, s in self.steps.items():
            m = s.mean(axis=0)
            cos = float(np.dot(-m, g) / (np.linalg.norm(m) * np.linalg.norm(g)))
            out[name] = {
                "n_samples": int(len(s)),
                "mean_step": m.tolist(),
                "angle_to_neg_gradient_deg": math.degrees(math.acos(max(-1.0, min(1.0, cos)))),
                "relative_distance_to_newton": float(np.linalg.norm(m - self.newton) / np.linalg.norm(self.newton)),
            }
        return out


def single_step_study(point=(-1.0, 0.5), n_samples: int = 10_000, seed: int = 0,
                      fgd_eta: float = 1e-3, eta: float = 1.0) -> SingleStepStudy:
    """Sampled single steps of FGD, FoMoH and FoMoH-2D from one 2D Rosenbrock point.

    Every sample draws fresh tangents from one Philox stream; the Newton step
    at the same point is included for reference.
    """
    model = rosenbrock(2)
    f = model.objective()
    theta = np.asarray(point, dtype=np.float64)
    _, rng = trajectory_streams(seed)
    g = model.gradient(theta)
    newton = newton_step(f, theta, eta)[0] - theta
    steps = {"FGD": np.empty((n_samples, 2)), "FoMoH": np.empty((n_samples, 2)),
             "FoMoH-2D": np.empty((n_samples, 2))}
    jit = Jitter()
    for i in range(n_samples):
        steps["FGD"][i] = fgd_step(f, theta, fgd_eta, rng)[0] - theta
        steps["FoMoH"][i] = fomoh_step(f, theta, eta, rng)[0] - theta
        steps["FoMoH-2D"][i] = fomoh_kd_step(f, theta, eta, 2, rng, jit)[0] - theta
    return SingleStepStudy(theta, g, newton, steps)
