"""Result files: per-method CSVs, a JSON summary and median-curve CSVs.

Floats are written with 9 significant digits and rows are sorted by
(method, seed, iteration), so identical runs give identical bytes.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import astuple
from pathlib import Path
from typing import Dict, Iterable, List

import numpy as np

from ..errors import OutputError
from .experiments import ExperimentResult, RunRecord, SingleStepStudy

CSV_COLUMNS = ("seed", "iter", "train_loss", "val_loss", "train_acc", "val_acc",
               "eta", "wall_ms", "jitter", "retries")


def fmt(x) -> str:
    """9 significant digits for floats, plain integers for ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


def records_csv(records: Iterable[RunRecord]) -> str:
    rows = sorted(records, key=lambda r: (r.seed, r.iter))
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(fmt(v) for v in astuple(r)) for r in rows]
    return "\n".join(lines) + "\n"


def _round(obj):
    """Clamp floats to 9 significant digits; NaN/inf become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.9g}") if math.isfinite(x) else None
    return obj


def summary_json(summary: dict) -> str:
    return json.dumps(_round(summary), indent=2, sort_keys=True, allow_nan=False) + "\n"


def median_curves_csv(curves: Dict[str, np.ndarray]) -> str:
    lines = ["method,iter,median_loss"]
    for label in sorted(curves):
        lines += [f"{label},{i},{fmt(v)}" for i, v in enumerate(curves[label])]
    return "\n".join(lines) + "\n"


def slug(label: str) -> str:
    """File-system friendly method name: ``FoMoH-2D (LR-Sch.)`` -> ``FoMoH-2D_LR-Sch``."""
    return re.sub(r"[^A-Za-z0-9.-]+", "_", label).strip("_.")


def _prepare(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_outputs(result: ExperimentResult, out_dir, prefix: str = "") -> List[Path]:
    """Write ``<method>.csv`` per method, ``summary.json`` and (if any) ``median_curves.csv``."""
    out = _prepare(out_dir)
    written = []
    for label in sorted(result.trajectories):
        records = [r for t in result.trajectories[label] for r in t.records]
        path = out / f"{prefix}{slug(label)}.csv"
        _write(path, records_csv(records))
        written.append(path)
    path = out / f"{prefix}summary.json"
    _write(path, summary_json(result.summary))
    written.append(path)
    if result.curves:
        path = out / f"{prefix}median_curves.csv"
        _write(path, median_curves_csv(result.curves))
        written.append(path)
    return written


def emit_single_step(study: SingleStepStudy, out_dir) -> List[Path]:
    """Histogram-ready samples (``method,sample,dx,dy``) plus a JSON summary."""
    out = _prepare(out_dir)
    lines = ["method,sample,dx,dy"]
    for name in sorted(study.steps):
        lines += [f"{name},{i},{fmt(dx)},{fmt(dy)}" for i, (dx, dy) in enumerate(study.steps[name])]
    lines.append(f"Newton,0,{fmt(study.newton[0])},{fmt(study.newton[1])}")
    samples = out / "single_step_samples.csv"
    _write(samples, "\n".join(lines) + "\n")
    summary = out / "single_step_summary.json"
    _write(summary, summary_json(study.summary()))
    return [samples, summary]
