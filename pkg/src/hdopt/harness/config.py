"""Experiment configuration: YAML in, validated dataclasses out.

Schema of a training config (every key except ``model`` and ``methods`` is
optional)::

    name: logreg-desk
    model: {kind: logreg}            # logreg | mlp | cnn_small (see build_model)
    epochs: 50
    seeds: [0, 1, 2, 3, 4]
    data_dir: data/mnist-subset      # else --data / $HDOPT_DATA_DIR
    subset: true                     # 10k train / 2k validation
    precision: f32                   # f32 | f64
    out_dir: runs/logreg
    record_wall_time: true
    abort_reject_fraction: 0.5
    methods:
      - method: FoMoH-KD
        K: 2
        eta: 0.04221
        batch_size: 512
        label: FoMoH-2D (LR-Sch.)    # defaults to the optimizer label
        scheduler: {kind: plateau, factor: 0.1}

A Rosenbrock config uses the ``RosenbrockConfig`` fields instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

import yaml

from ..errors import ConfigError
from ..models import build_model
from ..optimizers import OptimizerConfig

PRECISIONS = ("f32", "f64")


def _check_keys(section, mapping, allowed):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {sorted(unknown)}; allowed {sorted(allowed)}")


def parse_seeds(value) -> Tuple[int, ...]:
    """Accept ``3``, ``"0,1,2"`` or ``[0, 1, 2]``."""
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    elif isinstance(value, int):
        parts = [value]
    else:
        parts = list(value)
    try:
        seeds = tuple(int(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds must be integers, got {value!r}") from exc
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be non-negative")
    return seeds


@dataclass(frozen=True)
class MethodSpec:
    optimizer: OptimizerConfig
    batch_size: int
    label: str

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        if not isinstance(d, dict):
            raise ConfigError(f"method entry must be a mapping, got {d!r}")
        opt_keys = {f.name for f in fields(OptimizerConfig)}
        _check_keys("method", d, opt_keys | {"batch_size", "label"})
        opt = OptimizerConfig(**{k: v for k, v in d.items() if k in opt_keys})
        batch = int(d.get("batch_size", 128))
        if batch < 1:
            raise ConfigError(f"batch_size must be >= 1, got {batch}")
        label = str(d.get("label") or (opt.label + (" (LR-Sch.)" if opt.scheduler else "")))
        return cls(opt, batch, label)


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    methods: Tuple[MethodSpec, ...]
    name: str = "experiment"
    epochs: int = 1
    seeds: Tuple[int, ...] = (0,)
    data_dir: Optional[str] = None
    subset: bool = False
    precision: str = "f32"
    out_dir: str = "runs"
    record_wall_time: bool = True
    abort_reject_fraction: float = 0.5

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if not 0.0 < self.abort_reject_fraction <= 1.0:
            raise ConfigError("abort_reject_fraction must lie in (0, 1]")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"method labels must be unique, got {labels}")
        model = build_model(self.model)
        for m in self.methods:
            m.optimizer.validate_dim(model.dim)
        if self.data_dir is not None and not Path(self.data_dir).is_dir():
            raise ConfigError(f"data_dir {self.data_dir} does not exist")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        allowed = {f.name for f in fields(cls)}
        _check_keys("experiment", d, allowed)
        if "model" not in d or "methods" not in d:
            raise ConfigError("config needs 'model' and 'methods'")
        if not isinstance(d["model"], dict):
            raise ConfigError("model must be a mapping with a 'kind' key")
        kw = dict(d)
        kw["methods"] = tuple(MethodSpec.from_dict(m) for m in d["methods"])
        if "seeds" in kw:
            kw["seeds"] = parse_seeds(kw["seeds"])
        if "epochs" in kw:
            kw["epochs"] = int(kw["epochs"])
        return cls(**kw)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Copy with non-``None`` overrides applied (used for CLI flags)."""
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class RosenbrockConfig:
    """Rosenbrock comparison protocol.

    ``etas`` maps a method label to its learning rate; FoMoH variants and
    Newton default to 1.0.
    """
    dims: Tuple[int, ...] = (2, 10)
    seeds: Tuple[int, ...] = tuple(range(10))
    iterations: int = 5000
    threshold: float = 1e-6
    stop_below: Optional[float] = None
    methods_2d: Tuple[str, ...] = ("FGD", "FoMoH", "FoMoH-BP", "FoMoH-2D", "Newton", "BP")
    ks_10d: Tuple[int, ...] = tuple(range(2, 11))
    etas: dict = field(default_factory=lambda: {"FGD": 1e-4, "BP": 2e-4})
    out_dir: str = "runs/rosenbrock"

    def __post_init__(self):
        if not self.dims or any(d < 2 for d in self.dims):
            raise ConfigError(f"dims must be >= 2, got {self.dims}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "RosenbrockConfig":
        _check_keys("rosenbrock", d, {f.name for f in fields(cls)})
        kw = dict(d)
        for key in ("dims", "methods_2d", "ks_10d"):
            if key in kw:
                kw[key] = tuple(int(v) if key != "methods_2d" else str(v) for v in kw[key])
        if "seeds" in kw:
            kw["seeds"] = parse_seeds(kw["seeds"])
        if "etas" in kw:
            kw["etas"] = {**cls().etas, **kw["etas"]}
        return cls(**kw)


def load_yaml(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_yaml(path))
