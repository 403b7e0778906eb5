"""Experiment harness: configs, sweeps, verification battery, reporting, CLI."""

from .config import ConfigError, build_problem, load_config, validate_config
from .sweep import SweepResult, run_sweep, trial_rng
