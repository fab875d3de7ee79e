"""Benchmark harness and command line."""

from .config import ExperimentConfig, config_from_dict, load_config
from .dataset import read_dataset, write_dataset
from .runner import cmd_estimate, cmd_generate, cmd_sweep, cmd_train, run_sweep, trial_rng

__all__ = [
    "ExperimentConfig", "cmd_estimate", "cmd_generate", "cmd_sweep", "cmd_train",
    "config_from_dict", "load_config", "read_dataset", "run_sweep", "trial_rng", "write_dataset",
]
