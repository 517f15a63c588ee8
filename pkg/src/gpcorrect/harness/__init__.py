"""Experiment harness: configuration, drivers, reports, CLI."""

from .config import ExperimentConfig, build_config, load_config, uniform_grid
from .experiments import (
    ExperimentResult,
    GradientCheckReport,
    TimingResult,
    error_norm,
    improvement_pct,
    run_experiment,
    run_experiment_1d,
    run_experiment_2d,
    run_gradient_check,
    run_timing,
)
from .fields import FIELDS, get_field
from .report import write_experiment_outputs, write_gradcheck_csv, write_timing_csv

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "FIELDS",
    "GradientCheckReport",
    "TimingResult",
    "build_config",
    "error_norm",
    "get_field",
    "improvement_pct",
    "load_config",
    "run_experiment",
    "run_experiment_1d",
    "run_experiment_2d",
    "run_gradient_check",
    "run_timing",
    "uniform_grid",
    "write_experiment_outputs",
    "write_gradcheck_csv",
    "write_timing_csv",
]
