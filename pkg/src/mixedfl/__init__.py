"""Simulation engine for mixed federated learning.

Jointly minimizes a federated loss (computed on clients) and a centralized
loss (computed at the server) with Parallel Training, 1-way Gradient
Transfer and 2-way Gradient Transfer, plus FedAvg and a pooled-data baseline.
"""
from .engine import HyperParams, MetricsRow, RoundState, simulate
from .harness import ExperimentConfig, list_presets, parse_config, run_experiment
from .params import RngStream

__all__ = [
    "ExperimentConfig",
    "HyperParams",
    "MetricsRow",
    "RngStream",
    "RoundState",
    "list_presets",
    "parse_config",
    "run_experiment",
    "simulate",
]

__version__ = "0.1.0"
