"""Configuration, metrics, experiment runners and the CLI."""
from .config import ConfigError, ExperimentConfig, load_config, toy_scenario
from .metrics import MetricsReport, compute_metrics, pooled_metrics
from .runner import alpha_tradeoff, evaluate, run_episode, run_sweep

__all__ = [
    "ConfigError", "ExperimentConfig", "MetricsReport", "alpha_tradeoff", "compute_metrics", "evaluate",
    "load_config", "pooled_metrics", "run_episode", "run_sweep", "toy_scenario",
]
