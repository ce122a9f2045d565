"""Experiment configuration, orchestration and reporting."""

from .bench import measure_overhead
from .config import ConfigError, ExperimentConfig, MethodSpec, default_config, load_config
from .diagnostic import DiagnosticReport, per_region_diagnostic
from .experiment import ExperimentResult, run_experiment

__all__ = ["ConfigError", "DiagnosticReport", "ExperimentConfig", "ExperimentResult", "MethodSpec",
           "default_config", "load_config", "measure_overhead", "per_region_diagnostic", "run_experiment"]
