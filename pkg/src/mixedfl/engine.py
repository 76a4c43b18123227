"""Round loop for FedAvg and the three mixed algorithms.

One round of each algorithm, starting from global model ``x``:

* ``fedavg``: cohort clients run K local steps; the ``p_i``-weighted mean
  delta is handed (negated) to the server optimizer.
* ``owgt`` (1-way gradient transfer): one central batch gradient at ``x`` is
  added to every client gradient during the round, then as FedAvg.
* ``pt`` (parallel training): K central steps run next to a FedAvg round; the
  central and federated deltas are *summed* and applied by the merge
  optimizer.
* ``twgt`` (2-way gradient transfer): PT where clients add the previous
  round's central gradient and the central loop adds the previous round's
  average client gradient, both recovered from deltas.
* ``central-oracle``: plain SGD on the pooled data, the accuracy baseline.

Randomness for round ``t`` comes from ``RngStream(seed).child(t)`` with fixed
sub-paths for the cohort, the central batches and each client, so results do
not depend on the order in which clients are evaluated. Matching these paths
across algorithms is what makes the K=1 equivalence exact.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import BgdSample, bgd_approx, step_size_ceiling
from .optimizers import SGD_STATE, OptimizerConfig, OptimizerState, opt_step
from .params import RngStream, check_dims, weighted_average, zeros
from .problems import LossOracle, MixedProblem

logger = logging.getLogger(__name__)

ALGORITHMS = ("fedavg", "pt", "owgt", "twgt", "central-oracle")

# sub-paths of a round stream
COHORT, CENTRAL, CLIENTS = 0, 1, 2


class HyperParamError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Loss or parameters became non-finite; ``rows`` holds telemetry up to that point."""

    def __init__(self, round: int, rows: list):
        super().__init__(f"numerical divergence at round {round}")
        self.round = round
        self.rows = rows


@dataclass(frozen=True)
class HyperParams:
    """Round-loop scalars. ``eta_c`` defaults to ``eta * eta_s``."""

    eta: float
    eta_s: float = 1.0
    eta_c: Optional[float] = None
    eta_m: float = 1.0
    K: int = 1
    S: int = 1
    client_batch: int = 1
    central_batch: int = 1
    T: int = 1
    client_opt: str = "sgd"
    central_opt: str = "sgd"
    server_opt: str = "sgd"
    merge_opt: str = "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    bytes_per_element: int = 4

    def __post_init__(self):
        if self.eta_c is None:
            object.__setattr__(self, "eta_c", self.eta * self.eta_s)

    @property
    def effective_step(self) -> float:
        return self.eta * self.eta_s * self.K

    @property
    def effective_central_step(self) -> float:
        return self.eta_c * self.K

    def validate(self, n_clients: Optional[int] = None) -> None:
        for name in ("eta", "eta_s", "eta_c", "eta_m"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise HyperParamError(f"{name} must be a finite nonnegative number, got {v}")
        if self.K < 1:
            raise HyperParamError(f"K must be >= 1, got {self.K}")
        if self.S < 1:
            raise HyperParamError(f"S must be >= 1, got {self.S}")
        if n_clients is not None and self.S > n_clients:
            raise HyperParamError(f"cohort size S={self.S} exceeds number of clients N={n_clients}")
        if self.client_batch < 1 or self.central_batch < 1:
            raise HyperParamError("batch sizes must be >= 1")
        if self.T < 0:
            raise HyperParamError("T must be >= 0")
        for role in ("client_opt", "central_opt", "merge_opt"):
            if getattr(self, role) != "sgd":
                raise HyperParamError(f"{role} must be 'sgd'")
        if self.server_opt not in ("sgd", "adam"):
            raise HyperParamError(f"server_opt must be 'sgd' or 'adam', got {self.server_opt!r}")

    def client_cfg(self) -> OptimizerConfig:
        return OptimizerConfig(self.client_opt, self.eta)

    def central_cfg(self) -> OptimizerConfig:
        return OptimizerConfig(self.central_opt, self.eta_c)

    def server_cfg(self) -> OptimizerConfig:
        return OptimizerConfig(self.server_opt, self.eta_s, self.adam_beta1,
                               self.adam_beta2, self.adam_epsilon)

    def merge_cfg(self) -> OptimizerConfig:
        return OptimizerConfig(self.merge_opt, self.eta_m)


@dataclass(frozen=True)
class RoundState:
    x: np.ndarray
    t: int = 0
    aug_c: Optional[np.ndarray] = None
    aug_f: Optional[np.ndarray] = None
    server_state: OptimizerState = SGD_STATE
    merge_state: OptimizerState = SGD_STATE

    @classmethod
    def initial(cls, x0: np.ndarray, aug_c0=None, aug_f0=None) -> "RoundState":
        x0 = np.array(x0, dtype=np.float64)
        aug_c = zeros(x0.size) if aug_c0 is None else np.array(aug_c0, dtype=np.float64)
        aug_f = zeros(x0.size) if aug_f0 is None else np.array(aug_f0, dtype=np.float64)
        check_dims(x0, aug_c, "augmenting gradient")
        check_dims(x0, aug_f, "augmenting gradient")
        return cls(x=x0, aug_c=aug_c, aug_f=aug_f)


@dataclass(frozen=True)
class ClientResult:
    delta: np.ndarray
    weight: float
    steps: int


COLUMNS = (
    "round", "algorithm", "loss_total", "loss_fed", "loss_cent", "dist_to_opt_sq",
    "g_tilde_sq", "b_tilde_sq", "central_batches_consumed", "bytes_down", "bytes_up",
)


@dataclass
class MetricsRow:
    """One telemetry row. Losses and dissimilarity are measured at the model
    *entering* the round; counters describe the work done in the round (or
    the whole run, for the closing summary row)."""

    round: int
    algorithm: str
    loss_total: float
    loss_fed: float
    loss_cent: float
    dist_to_opt_sq: Optional[float]
    g_tilde_sq: Optional[float]
    b_tilde_sq: Optional[float]
    central_batches_consumed: int
    bytes_down: int
    bytes_up: int

    def as_fields(self) -> List[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(getattr(self, c)) for c in COLUMNS]


# ---------------------------------------------------------------- building blocks


def client_update(x0: np.ndarray, aug: np.ndarray, oracle: LossOracle, hp: HyperParams,
                  rng: RngStream, steps: Optional[int] = None,
                  record: Optional[list] = None) -> ClientResult:
    """K local ClientOpt steps on the client's stochastic gradient plus ``aug``.

    ``record``, when given, receives the raw client gradient of every step
    (without ``aug``), for white-box checks.
    """
    check_dims(x0, aug, "augmenting gradient")
    k_i = hp.K if steps is None else int(steps)
    if k_i < 1:
        raise HyperParamError("client steps must be >= 1")
    cfg = hp.client_cfg()
    x, state, p = x0, SGD_STATE, 0
    for batch in oracle.draw_batches(hp.client_batch, k_i, rng):
        g = oracle.batch_grad(x, batch)
        if record is not None:
            record.append(g)
        p += hp.client_batch
        x, state = opt_step(cfg, state, x, g + aug)
    return ClientResult(delta=x - x0, weight=float(p), steps=k_i)


def sample_cohort(n_clients: int, S: int, rng: RngStream) -> Tuple[int, ...]:
    """Uniform sample of ``S`` distinct client ids, sorted."""
    if not 1 <= S <= n_clients:
        raise HyperParamError(f"cohort size S={S} must lie in [1, N={n_clients}]")
    if S == n_clients:
        return tuple(range(n_clients))
    ids = rng.generator().choice(n_clients, size=S, replace=False)
    return tuple(sorted(int(i) for i in ids))


def central_update_loop(x0: np.ndarray, aug_f: np.ndarray, hp: HyperParams, oracle: LossOracle,
                        rng: RngStream, record: Optional[list] = None) -> np.ndarray:
    """K CentralOpt steps, each on a fresh central batch, plus ``aug_f``; returns the delta."""
    check_dims(x0, aug_f, "augmenting gradient")
    cfg = hp.central_cfg()
    x, state = x0, SGD_STATE
    for batch in oracle.draw_batches(hp.central_batch, hp.K, rng):
        g = oracle.batch_grad(x, batch)
        if record is not None:
            record.append(g)
        x, state = opt_step(cfg, state, x, g + aug_f)
    return x - x0


@dataclass
class RoundTrace:
    """What a round did, beyond the new state."""

    cohort: Tuple[int, ...] = ()
    client_results: List[ClientResult] = field(default_factory=list)
    delta_c: Optional[np.ndarray] = None
    delta_f: Optional[np.ndarray] = None
    central_batches: int = 0
    bytes_down: int = 0
    bytes_up: int = 0
    client_grads: Optional[dict] = None
    central_grads: Optional[list] = None


def _footprint(problem: MixedProblem, i: int) -> int:
    if problem.client_footprint is not None:
        return problem.client_footprint[i]
    return problem.dim


def _federated_round(state: RoundState, problem: MixedProblem, hp: HyperParams, rng: RngStream,
                     aug: np.ndarray, trace: RoundTrace, sends_gradient: bool):
    cohort = sample_cohort(problem.n_clients, hp.S, rng.child(COHORT))
    results = []
    for i in cohort:
        rec = [] if trace.client_grads is not None else None
        results.append(client_update(state.x, aug, problem.fed.clients[i], hp, rng.child(CLIENTS, i), record=rec))
        if rec is not None:
            trace.client_grads[i] = rec
        fp = _footprint(problem, i)
        trace.bytes_down += fp * (2 if sends_gradient else 1) * hp.bytes_per_element
        trace.bytes_up += fp * hp.bytes_per_element
    delta = weighted_average([(r.delta, r.weight) for r in results])
    x_f, server_state = opt_step(hp.server_cfg(), state.server_state, state.x, -delta)
    trace.cohort = cohort
    trace.client_results = results
    return x_f, server_state


def _new_trace(instrument: bool) -> RoundTrace:
    return RoundTrace(client_grads={} if instrument else None, central_grads=[] if instrument else None)


def round_fedavg(state, problem, hp, rng, instrument=False):
    trace = _new_trace(instrument)
    x_f, server_state = _federated_round(state, problem, hp, rng, zeros(problem.dim), trace, False)
    return replace(state, x=x_f, t=state.t + 1, server_state=server_state), trace


def round_owgt(state, problem, hp, rng, instrument=False):
    trace = _new_trace(instrument)
    batch = problem.cent.draw_batches(hp.central_batch, 1, rng.child(CENTRAL))[0]
    g_c = problem.cent.batch_grad(state.x, batch)
    if instrument:
        trace.central_grads.append(g_c)
    trace.central_batches = 1
    x_f, server_state = _federated_round(state, problem, hp, rng, g_c, trace, True)
    return replace(state, x=x_f, t=state.t + 1, server_state=server_state), trace


def _parallel_round(state, problem, hp, rng, aug_c, aug_f, trace, sends_gradient):
    delta_c = central_update_loop(state.x, aug_f, hp, problem.cent, rng.child(CENTRAL), trace.central_grads)
    trace.central_batches = hp.K
    x_f, server_state = _federated_round(state, problem, hp, rng, aug_c, trace, sends_gradient)
    delta_f = x_f - state.x
    x_new, merge_state = opt_step(hp.merge_cfg(), state.merge_state, state.x, -(delta_c + delta_f))
    trace.delta_c, trace.delta_f = delta_c, delta_f
    return x_new, server_state, merge_state


def round_pt(state, problem, hp, rng, instrument=False):
    trace = _new_trace(instrument)
    z = zeros(problem.dim)
    x_new, server_state, merge_state = _parallel_round(state, problem, hp, rng, z, z, trace, False)
    return replace(state, x=x_new, t=state.t + 1, server_state=server_state, merge_state=merge_state), trace


def round_twgt(state, problem, hp, rng, instrument=False):
    if hp.client_opt != "sgd" or hp.central_opt != "sgd":
        raise HyperParamError("2-way gradient transfer needs SGD client and central optimizers")
    trace = _new_trace(instrument)
    aug_c, aug_f = state.aug_c, state.aug_f
    x_new, server_state, merge_state = _parallel_round(state, problem, hp, rng, aug_c, aug_f, trace, True)
    # average gradients applied during the round, minus what was transferred in;
    # a frozen role (zero learning rate) keeps its previous augmenting gradient
    if hp.eta_c > 0:
        new_aug_c = -trace.delta_c / (hp.eta_c * hp.K) - aug_f
    else:
        new_aug_c = aug_c
    if hp.eta > 0:
        total_steps = sum(r.steps for r in trace.client_results)
        delta_sum = np.sum([r.delta for r in trace.client_results], axis=0)
        new_aug_f = -delta_sum / (hp.eta * total_steps) - aug_c
    else:
        new_aug_f = aug_f
    new_state = replace(state, x=x_new, t=state.t + 1, aug_c=new_aug_c, aug_f=new_aug_f,
                        server_state=server_state, merge_state=merge_state)
    return new_state, trace


def round_central_oracle(state, problem, hp, rng, instrument=False):
    trace = _new_trace(instrument)
    pooled = problem.pooled_oracle()
    cfg = OptimizerConfig("sgd", hp.eta_c)
    x, st = state.x, SGD_STATE
    for batch in pooled.draw_batches(hp.central_batch, hp.K, rng.child(CENTRAL)):
        x, st = opt_step(cfg, st, x, pooled.batch_grad(x, batch))
    trace.central_batches = hp.K
    return replace(state, x=x, t=state.t + 1), trace


ROUND_FUNCTIONS = {
    "fedavg": round_fedavg,
    "pt": round_pt,
    "owgt": round_owgt,
    "twgt": round_twgt,
    "central-oracle": round_central_oracle,
}


# ---------------------------------------------------------------- metrics at x^(t)


def sample_bgd(problem: MixedProblem, x: np.ndarray, hp: HyperParams, rng: RngStream, t: int) -> Optional[BgdSample]:
    """Dissimilarity estimate at ``x`` from the round's own cohort and first batches."""
    if abs(problem.w_f + problem.w_c - 1.0) > 1e-9:
        return None
    cohort = sample_cohort(problem.n_clients, hp.S, rng.child(COHORT))
    g_f = np.zeros(problem.dim)
    for i in cohort:
        c = problem.fed.clients[i]
        g_f += c.batch_grad(x, c.draw_batches(hp.client_batch, 1, rng.child(CLIENTS, i))[0])
    g_f /= len(cohort)
    g_c = problem.cent.batch_grad(x, problem.cent.draw_batches(hp.central_batch, 1, rng.child(CENTRAL))[0])
    return bgd_approx(g_f, g_c, problem.w_f, problem.w_c, round=t)


def _row(problem, algorithm, x, t, bgd, batches, down, up) -> MetricsRow:
    lf, lc = problem.loss_fed(x), problem.loss_cent(x)
    dist = None
    if problem.x_star is not None:
        d = x - problem.x_star
        dist = float(d @ d)
    return MetricsRow(
        round=t, algorithm=algorithm, loss_total=lf + lc, loss_fed=lf, loss_cent=lc,
        dist_to_opt_sq=dist,
        g_tilde_sq=None if bgd is None else bgd.g_tilde_sq,
        b_tilde_sq=None if bgd is None else bgd.b_tilde_sq,
        central_batches_consumed=batches, bytes_down=down, bytes_up=up,
    )


def run_round(algorithm: str, state: RoundState, problem: MixedProblem, hp: HyperParams,
              rng: RngStream, with_metrics: bool = True,
              instrument: bool = False) -> Tuple[RoundState, Optional[MetricsRow], RoundTrace]:
    """Run one round; ``rng`` is the round's stream. Metrics describe the entering model."""
    fn = ROUND_FUNCTIONS[algorithm]
    bgd = sample_bgd(problem, state.x, hp, rng, state.t) if with_metrics else None
    new_state, trace = fn(state, problem, hp, rng, instrument=instrument)
    row = None
    if with_metrics:
        row = _row(problem, algorithm, state.x, state.t, bgd, trace.central_batches,
                   trace.bytes_down, trace.bytes_up)
    return new_state, row, trace


def run_round_fedavg(state, problem, hp, rng):
    s, row, _ = run_round("fedavg", state, problem, hp, rng)
    return s, row


def run_round_owgt(state, problem, hp, rng):
    s, row, _ = run_round("owgt", state, problem, hp, rng)
    return s, row


def run_round_pt(state, problem, hp, rng):
    s, row, _ = run_round("pt", state, problem, hp, rng)
    return s, row


def run_round_twgt(state, problem, hp, rng):
    s, row, _ = run_round("twgt", state, problem, hp, rng)
    return s, row


# ---------------------------------------------------------------- driver


@dataclass
class Trajectory:
    algorithm: str
    rows: List[MetricsRow]
    losses: List[float]
    final: RoundState
    bgd: List[BgdSample] = field(default_factory=list)

    @property
    def x(self) -> np.ndarray:
        return self.final.x


def simulate(problem: MixedProblem, algorithm: str, hp: HyperParams, seed: int,
             eval_every: int = 1, x0: Optional[np.ndarray] = None,
             aug_c0: Optional[np.ndarray] = None, aug_f0: Optional[np.ndarray] = None,
             on_round: Optional[Callable[[RoundState, RoundTrace], None]] = None,
             instrument: bool = False) -> Trajectory:
    """Run ``hp.T`` rounds and collect telemetry.

    ``losses[t]`` is ``f(x^(t))`` for every ``t`` in ``0..T``. Rows are emitted
    every ``eval_every`` rounds, followed by one summary row at round ``T``
    whose counters are run totals.

    Raises:
        DivergenceError: as soon as the loss or the model stops being finite.
    """
    if algorithm not in ROUND_FUNCTIONS:
        raise HyperParamError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if eval_every < 1:
        raise HyperParamError("eval_every must be >= 1")
    hp.validate(problem.n_clients)
    root = RngStream(seed)
    state = RoundState.initial(problem.x0 if x0 is None else x0, aug_c0, aug_f0)
    rows: List[MetricsRow] = []
    bgds: List[BgdSample] = []
    losses = [problem.loss(state.x)]
    totals = [0, 0, 0]
    for t in range(hp.T):
        rng = root.child(t)
        with np.errstate(over="ignore", invalid="ignore"):
            state, row, trace = run_round(algorithm, state, problem, hp, rng,
                                          with_metrics=(t % eval_every == 0), instrument=instrument)
            f = problem.loss(state.x) if np.all(np.isfinite(state.x)) else math.nan
        if row is not None:
            rows.append(row)
            if row.g_tilde_sq is not None:
                bgds.append(BgdSample(row.g_tilde_sq, row.b_tilde_sq, row.round))
        totals[0] += trace.central_batches
        totals[1] += trace.bytes_down
        totals[2] += trace.bytes_up
        if not math.isfinite(f):
            logger.error("divergence in round %d of %s", t, algorithm)
            raise DivergenceError(t, rows)
        losses.append(f)
        if on_round is not None:
            on_round(state, trace)
    bgd = sample_bgd(problem, state.x, hp, root.child(hp.T), hp.T)
    rows.append(_row(problem, algorithm, state.x, hp.T, bgd, *totals))
    return Trajectory(algorithm, rows, losses, state, bgds)


# ---------------------------------------------------------------- step-size checks


def estimate_B(problem: MixedProblem, seed: int = 0, n_points: int = 32, radius: float = 1.0) -> float:
    """Crude multiplicative-dissimilarity estimate from full gradients near ``x0``."""
    gen = RngStream(seed, (7,)).generator()
    best = 1.0
    for _ in range(n_points):
        x = problem.x0 + radius * gen.normal(size=problem.dim)
        s = bgd_approx(problem.fed.grad(x), problem.cent.grad(x), problem.w_f, problem.w_c)
        if s.b_tilde_sq is not None:
            best = max(best, s.b_tilde_sq)
    return math.sqrt(best)


def step_size_warnings(problem: MixedProblem, algorithm: str, hp: HyperParams,
                       B: Optional[float] = None) -> List[str]:
    """Warnings for effective step sizes above the convergence-bound ceilings.

    The ceilings are sufficient conditions, so exceeding one is not an error.
    """
    if algorithm not in ("pt", "owgt", "twgt") or problem.beta is None:
        return []
    regime = problem.regime
    mu = problem.mu or 0.0
    if algorithm == "twgt" and regime == "strongly-convex" and mu <= 0:
        regime = "convex"
    if B is None:
        B = estimate_B(problem) if abs(problem.w_f + problem.w_c - 1.0) <= 1e-9 else 1.0
    ceiling = step_size_ceiling(algorithm, regime, problem.beta, mu, B)
    out = []
    if hp.effective_step > ceiling:
        out.append(f"effective step eta*eta_s*K={hp.effective_step:.6g} exceeds the "
                   f"{algorithm} {regime} ceiling {ceiling:.6g} (beta={problem.beta:.6g}, B={B:.6g})")
    if algorithm in ("pt", "twgt") and hp.effective_central_step > ceiling:
        out.append(f"effective central step eta_c*K={hp.effective_central_step:.6g} exceeds the "
                   f"{algorithm} {regime} ceiling {ceiling:.6g}")
    return out
