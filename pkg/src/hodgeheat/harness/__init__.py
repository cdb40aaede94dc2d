"""Configuration-driven experiments and their reports."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config_text
from .experiments import (ConvergenceReport, ExperimentResult, observed_order,
                          run_crimes, run_cshape, run_decay, run_elliptic_convergence,
                          run_experiment, run_mesh, run_parabolic_convergence)

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config_text",
    "ConvergenceReport", "ExperimentResult", "observed_order", "run_crimes", "run_cshape",
    "run_decay", "run_elliptic_convergence", "run_experiment", "run_mesh",
    "run_parabolic_convergence",
]
