"""Hierarchical multi-agent PPO for sharing reconfigurable intelligent surfaces among operators."""
from .config import ExperimentConfig, SystemConfig, build_config, load_config
from .harness import run_experiment, smooth_series

__all__ = ["ExperimentConfig", "SystemConfig", "build_config", "load_config",
           "run_experiment", "smooth_series"]
__version__ = "0.1.0"
