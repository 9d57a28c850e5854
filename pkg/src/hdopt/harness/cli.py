"""Command-line entry point: ``hdopt {rosenbrock,train,single-step,check}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import HDOptError
from .checks import run_checks
from .config import RosenbrockConfig, load_config, load_yaml, parse_seeds
from .data import load_mnist_idx
from .experiments import run_experiment, run_rosenbrock_suite, single_step_study
from .outputs import emit_outputs, emit_single_step

PRECISION_CHOICES = ("f32", "f64")


def _add_common(p, precision=True):
    p.add_argument("--config", type=Path, help="YAML experiment config")
    p.add_argument("--seed", help="seed or comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--out", type=Path, help="output directory")
    if precision:
        p.add_argument("--precision", choices=PRECISION_CHOICES)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdopt", description="Hyper-dual forward-mode optimisation experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rosenbrock", help="2D method comparison and 10D hyperplane-dimension sweep")
    _add_common(p, precision=False)
    p.add_argument("--dims", help="comma-separated dimensions (default 2,10)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--stop-below", type=float, help="stop a run once f drops below this value")

    p = sub.add_parser("train", help="mini-batch training on MNIST IDX data")
    _add_common(p)
    p.add_argument("--data", help="directory with the four IDX files (else $HDOPT_DATA_DIR)")
    p.add_argument("--subset", action="store_true", default=None,
                   help="desk-scale subset: 10k train / 2k validation")
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-timing", action="store_true",
                   help="write wall_ms as 0 so reruns are byte-identical")

    p = sub.add_parser("single-step", help="sampled single steps from one 2D Rosenbrock point")
    _add_common(p, precision=False)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--point", default="-1.0,0.5", help="2D point as x,y")

    p = sub.add_parser("check", help="run the built-in oracle checks")
    p.add_argument("--seed", default="0")
    return ap


def _cmd_rosenbrock(args):
    cfg = RosenbrockConfig.from_dict(load_yaml(args.config)) if args.config else RosenbrockConfig()
    over = {}
    if args.dims:
        over["dims"] = tuple(int(d) for d in args.dims.split(","))
    if args.iterations is not None:
        over["iterations"] = args.iterations
    if args.stop_below is not None:
        over["stop_below"] = args.stop_below
    if args.seed is not None:
        over["seeds"] = parse_seeds(args.seed)
    if over:
        cfg = RosenbrockConfig.from_dict({**cfg.__dict__, **over})
    out = args.out or Path(cfg.out_dir)
    for dim, result in run_rosenbrock_suite(cfg).items():
        emit_outputs(result, out / f"D{dim}")
        for label, s in result.summary["methods"].items():
            print(f"D={dim:<3} {label:<10} median iters to f<{cfg.threshold:g}: "
                  f"{s['median_iters_to_threshold']:<8g} median final f: {s['median_final_loss']:.3e}")
    return 0


def _cmd_train(args):
    if args.config is None:
        raise HDOptError("train needs --config")
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(
        seeds=parse_seeds(args.seed) if args.seed else None,
        out_dir=str(args.out) if args.out else None,
        precision=args.precision,
        subset=args.subset,
        epochs=args.epochs,
        data_dir=args.data,
        record_wall_time=False if args.no_timing else None,
    )
    train, val = load_mnist_idx(cfg.data_dir, subset=cfg.subset)
    result = run_experiment(cfg, train, val)
    emit_outputs(result, cfg.out_dir)
    for label, s in result.summary.items():
        print(f"{label:<22} val_acc {s['val_acc']['mean']:.4f} +- {s['val_acc']['std']:.4f}  "
              f"val_loss {s['val_loss']['mean']:.4f} +- {s['val_loss']['std']:.4f}")
        for seed, diag in s["aborted"].items():
            print(f"  seed {seed}: {diag}")
    return 0


def _cmd_single_step(args):
    point = tuple(float(v) for v in args.point.split(","))
    seed = parse_seeds(args.seed)[0] if args.seed else 0
    study = single_step_study(point, args.samples, seed)
    emit_single_step(study, args.out or Path("runs/single_step"))
    print(json.dumps(study.summary(), indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rosenbrock":
            return _cmd_rosenbrock(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "single-step":
            return _cmd_single_step(args)
        return 0 if run_checks(seed=parse_seeds(args.seed)[0]) else 1
    except (HDOptError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
