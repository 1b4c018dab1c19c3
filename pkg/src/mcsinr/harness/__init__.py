"""Experiment orchestration: configuration, sweeps, verification and calibration."""

from .calibrate import Calibration, calibrate, clear_rates
from .config import ConfigError, ExperimentConfig
from .sweep import SweepResult, make_inputs, run_cell, run_sweep, summarize
from .verify import CHECKS, CheckReport

__all__ = [
    "CHECKS", "Calibration", "CheckReport", "ConfigError", "ExperimentConfig", "SweepResult",
    "calibrate", "clear_rates", "make_inputs", "run_cell", "run_sweep", "summarize",
]
