"""Experiment harness: configuration, evaluation, figures, and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .evaluation import (
    EvalReport,
    SweepPoint,
    counterfactual_action_distribution,
    eval_against_league,
    lie_weight_sweep,
    refresh_priorities_then_sweep,
)
from .cli import cli, cli_main

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "EvalReport",
    "SweepPoint",
    "counterfactual_action_distribution",
    "eval_against_league",
    "lie_weight_sweep",
    "refresh_priorities_then_sweep",
    "cli",
    "cli_main",
]
