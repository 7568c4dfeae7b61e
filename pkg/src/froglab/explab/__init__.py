"""Experiment orchestration: config files, grid runs, invariant suite, reports."""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import PhaseReport, run_experiment, slope_verdict
from .invariants import InvariantResult, run_invariant_suite
from .report import sweep_report

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config", "PhaseReport",
    "run_experiment", "slope_verdict", "InvariantResult", "run_invariant_suite", "sweep_report",
]
