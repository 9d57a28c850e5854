"""Experiment harness: data loading, configuration, runs and result files."""
from .config import ExperimentConfig, MethodSpec, RosenbrockConfig, load_config, parse_seeds
from .data import DATA_ENV, load_mnist_idx, parse_idx, read_idx
from .experiments import (
    ExperimentResult,
    RunRecord,
    SingleStepStudy,
    Trajectory,
    run_experiment,
    run_rosenbrock_suite,
    single_step_study,
    train_trajectory,
    trajectory_streams,
)
from .outputs import CSV_COLUMNS, emit_outputs, emit_single_step

__all__ = [
    "ExperimentConfig", "MethodSpec", "RosenbrockConfig", "load_config", "parse_seeds",
    "DATA_ENV", "load_mnist_idx", "parse_idx", "read_idx",
    "ExperimentResult", "RunRecord", "SingleStepStudy", "Trajectory", "run_experiment",
    "run_rosenbrock_suite", "single_step_study", "train_trajectory", "trajectory_streams",
    "CSV_COLUMNS", "emit_outputs", "emit_single_step",
]
