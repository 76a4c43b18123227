"""Gradient dissimilarity estimates, step-size ceilings, convergence and cost accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .params import check_dims, l2_norm_sq

ALGORITHMS = ("pt", "owgt", "twgt")
REGIMES = ("strongly-convex", "convex", "nonconvex")

# guard on ||grad f||^2 below which the multiplicative estimate is undefined
B_DENOM_FLOOR = 1e-30


@dataclass(frozen=True)
class BgdSample:
    """Sampled dissimilarity at one round; ``b_tilde_sq`` is None when undefined."""

    g_tilde_sq: float
    b_tilde_sq: Optional[float]
    round: int = 0


def bgd_approx(grad_f: np.ndarray, grad_c: np.ndarray, w_f: float, w_c: float,
               round: int = 0) -> BgdSample:
    """Single-round estimates of the additive (G) and multiplicative (B) dissimilarity.

    ``grad_f`` is the cohort-average client gradient and ``grad_c`` the central
    stochastic gradient, both at the same model. With ``s = |g_f|^2/w_f +
    |g_c|^2/w_c`` and ``t = |g_f + g_c|^2``, G~^2 = s - t and B~^2 = s / t.
    Tiny negative G~^2 from rounding is clamped to zero.
    """
    if not (w_f > 0 and w_c > 0):
        raise ValueError(f"w_f and w_c must be positive, got {w_f}, {w_c}")
    if abs(w_f + w_c - 1.0) > 1e-9:
        raise ValueError(f"w_f + w_c must equal 1, got {w_f + w_c}")
    check_dims(grad_f, grad_c, "gradient")
    s = l2_norm_sq(grad_f) / w_f + l2_norm_sq(grad_c) / w_c
    t = l2_norm_sq(grad_f + grad_c)
    g_sq = max(s - t, 0.0)
    b_sq = s / t if t >= B_DENOM_FLOOR else None
    return BgdSample(g_sq, b_sq, round)


def max_bgd_over_window(samples: Sequence[BgdSample], t_lo: int, t_hi: int) -> Tuple[float, Optional[float]]:
    """Componentwise maxima over samples with ``t_lo <= round <= t_hi``."""
    window = [s for s in samples if t_lo <= s.round <= t_hi]
    if not window:
        raise ValueError(f"no samples in round window [{t_lo}, {t_hi}]")
    bs = [s.b_tilde_sq for s in window if s.b_tilde_sq is not None]
    return max(s.g_tilde_sq for s in window), (max(bs) if bs else None)


def step_size_ceiling(algorithm: str, regime: str, beta: float, mu: float = 0.0, B: float = 1.0) -> float:
    """Largest effective federated step ``eta * eta_s * K`` covered by the convergence bounds.

    Only Parallel Training depends on ``B``; the 2-way strongly convex entry
    also needs ``mu > 0``.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"no step-size ceiling for algorithm {algorithm!r}")
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if B < 1:
        raise ValueError("B must be >= 1")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if algorithm == "pt":
        return 1.0 / (6.0 * (1.0 + B * B) * beta)
    if algorithm == "owgt":
        return 1.0 / (18.0 * beta) if regime == "nonconvex" else 1.0 / (8.0 * beta)
    if regime == "strongly-convex":
        if not mu > 0:
            raise ValueError("2-way strongly convex ceiling needs mu > 0")
        return min(1.0 / (81.0 * beta), 1.0 / (15.0 * mu))
    if regime == "convex":
        return 1.0 / (81.0 * beta)
    return 1.0 / (24.0 * beta)


# ------------------------------------------------------------- convergence


DEFAULT_EPS_GRID = (1e-2, 1e-4, 1e-6, 1e-8)


@dataclass
class ConvergenceDiagnostics:
    F0: float
    D0_sq: float
    rounds_to_eps: Dict[float, Optional[int]] = field(default_factory=dict)


def rounds_to_eps(trajectory: Sequence[Tuple[int, float]], f_star: float, eps: float) -> Optional[int]:
    for t, f in trajectory:
        if f - f_star <= eps:
            return t
    return None


def convergence_report(trajectory: Sequence[Tuple[int, float]], f_star: float, x0_dist_sq: float,
                       eps_grid: Iterable[float] = DEFAULT_EPS_GRID) -> ConvergenceDiagnostics:
    """Initial gaps and first round reaching each ``f(x_t) - f* <= eps``.

    Rounds that are never reached map to None.
    """
    if not trajectory:
        raise ValueError("empty trajectory")
    F0 = max(trajectory[0][1] - f_star, 0.0)
    return ConvergenceDiagnostics(
        F0=F0,
        D0_sq=max(float(x0_dist_sq), 0.0),
        rounds_to_eps={float(e): rounds_to_eps(trajectory, f_star, e) for e in eps_grid},
    )


# ------------------------------------------------------------------ costs


@dataclass(frozen=True)
class CostModel:
    """Embedding-table cost model.

    n_items (N) rows in the table, touched_items (n) rows a client needs,
    embed_dim (d), client_batch (B) and local_steps (K).
    """

    n_items: int
    touched_items: int
    embed_dim: int
    bytes_per_element: int = 4
    local_steps: int = 1
    client_batch: int = 1

    def __post_init__(self):
        if self.touched_items > self.n_items:
            raise ValueError("touched_items cannot exceed n_items")
        if min(self.n_items, self.embed_dim, self.bytes_per_element,
               self.local_steps, self.client_batch) < 1 or self.touched_items < 0:
            raise ValueError("cost model counts must be positive")


_COMM_FACTOR = {"pt": 2, "owgt": 3, "twgt": 3}


def comm_elements(algorithm: str, cost: CostModel) -> int:
    """Per-client elements exchanged per round.

    The baseline (everything on the client) ships the full table down and a
    full-size update up. Mixed algorithms only ship the touched rows, plus the
    central gradient for those rows under gradient transfer.
    """
    if algorithm == "baseline":
        return 2 * cost.n_items * cost.embed_dim
    if algorithm not in _COMM_FACTOR:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return _COMM_FACTOR[algorithm] * cost.touched_items * cost.embed_dim


def comm_overhead(algorithm: str, cost: CostModel) -> int:
    return comm_elements(algorithm, cost) * cost.bytes_per_element


def network_flops(cost: CostModel) -> int:
    b, d = cost.client_batch, cost.embed_dim
    return b * d + 3 * b * d * d + 3 * b * b * d + 2 * b


def regularizer_client_flops(cost: CostModel) -> int:
    """Spreadout forward + backward on one client step: ``N^2 d / 2 + N d``."""
    n, d = cost.n_items, cost.embed_dim
    return (n * n * d) // 2 + n * d


def comp_client_flops(algorithm: str, cost: CostModel) -> int:
    """Client flops per local step.

    Reported per step, not per round; multiply by ``local_steps`` for a
    round. ``regularizer_flops_per_round`` already does that.
    """
    if algorithm == "baseline":
        return network_flops(cost) + regularizer_client_flops(cost)
    if algorithm not in _COMM_FACTOR:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return network_flops(cost)


def regularizer_flops_per_round(algorithm: str, cost: CostModel) -> int:
    """Spreadout cost per round: on every client step (baseline) or once at the server."""
    base = (cost.n_items * cost.n_items * cost.embed_dim) // 2
    if algorithm == "baseline":
        return cost.local_steps * base
    if algorithm not in _COMM_FACTOR:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return base


def client_compute_savings(cost: CostModel) -> float:
    """Fraction of per-step client compute removed by moving the regularizer to the server."""
    return 1.0 - network_flops(cost) / comp_client_flops("baseline", cost)


def comm_savings(algorithm: str, cost: CostModel) -> float:
    return 1.0 - comm_elements(algorithm, cost) / comm_elements("baseline", cost)


def steady_state_excess(losses: Sequence[float], f_star: float, tail: float = 0.2) -> float:
    """Mean ``f - f*`` over the last ``tail`` fraction of a trajectory."""
    n = max(1, int(math.ceil(len(losses) * tail)))
    return float(np.mean(np.asarray(losses[-n:]) - f_star))
