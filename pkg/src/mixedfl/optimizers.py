"""First-order update rules for the client, server, central and merge roles.

Server and merge optimizers are handed the *negated* model delta as a
pseudo-gradient, so SGD with learning rate 1 on ``-delta`` lands on
``x + delta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .params import check_dims

KINDS = ("sgd", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    learning_rate: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}; expected one of {KINDS}")
        # zero is allowed so a role can be frozen
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.kind == "adam":
            if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
                raise ValueError("adam betas must lie in (0, 1)")
            if not self.epsilon > 0:
                raise ValueError("adam epsilon must be positive")


@dataclass(frozen=True)
class OptimizerState:
    step: int = 0
    m: Optional[np.ndarray] = field(default=None, repr=False)
    v: Optional[np.ndarray] = field(default=None, repr=False)


SGD_STATE = OptimizerState()


def opt_step(cfg: OptimizerConfig, state: OptimizerState, x: np.ndarray,
             g: np.ndarray) -> Tuple[np.ndarray, OptimizerState]:
    """Apply one update of ``cfg`` to ``x`` along gradient ``g``.

    Returns the new parameters and the new state; neither input is modified.
    """
    check_dims(x, g)
    if cfg.kind == "sgd":
        return x - cfg.learning_rate * g, state
    m = np.zeros_like(x) if state.m is None else state.m
    v = np.zeros_like(x) if state.v is None else state.v
    check_dims(x, m, "adam moment")
    t = state.step + 1
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    x_new = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return x_new, OptimizerState(step=t, m=m, v=v)
