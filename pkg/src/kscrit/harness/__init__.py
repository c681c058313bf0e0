"""Configuration, orchestration and persistence."""
from .config import (
    ConfigError, InitialCondition, OUTPUT_ROOT_ENV, RunConfig, config_from_string,
    config_to_ini, initial_density, load_config,
)
from .experiments import (
    ContinuationReport, ExperimentResult, SweepRow, continuation_delta, continuation_over,
    delta_ladder, run_experiment, sweep_mass, thresholds,
)

__all__ = [
    "ConfigError", "InitialCondition", "OUTPUT_ROOT_ENV", "RunConfig", "config_from_string",
    "config_to_ini", "initial_density", "load_config", "ContinuationReport", "ExperimentResult",
    "SweepRow", "continuation_delta", "continuation_over", "delta_ladder", "run_experiment",
    "sweep_mass", "thresholds",
]
