"""Configuration, experiment drivers and the command-line entry point."""
from .config import ConfigError, ExperimentConfig, OUT_ENV, load_config
from .experiments import run_experiment, table1_rows, write_table1

__all__ = ["ConfigError", "ExperimentConfig", "OUT_ENV", "load_config",
           "run_experiment", "table1_rows", "write_table1"]
