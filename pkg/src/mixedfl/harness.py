"""Config parsing, named presets and experiment runs.

A config is a flat YAML mapping. Keys are the run-level keys in
``RUN_KEYS`` plus the keyword parameters of the chosen problem generator
(``PROBLEMS``); anything else is rejected so that a typo never silently
falls back to a default. Example::

    problem: quadratic-pair
    algorithm: pt
    eta: 0.1
    K: 4
    S: 10
    T: 100
    seed: 7
"""
from __future__ import annotations

import csv
import inspect
import io
import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, TextIO

import yaml

from .engine import (
    ALGORITHMS,
    COLUMNS,
    HyperParamError,
    HyperParams,
    MetricsRow,
    Trajectory,
    simulate,
    step_size_warnings,
)
from .metrics import DEFAULT_EPS_GRID, step_size_ceiling
from .params import RngStream
from .problems import MixedProblem, make_label_imbalance_task, make_quadratic_pair, make_spreadout_task

logger = logging.getLogger(__name__)

PROBLEMS = {
    "quadratic-pair": make_quadratic_pair,
    "label-imbalance": make_label_imbalance_task,
    "spreadout": make_spreadout_task,
}

_HP_KEYS = {f.name for f in fields(HyperParams)}
RUN_KEYS = _HP_KEYS | {
    "problem", "algorithm", "seed", "problem_seed", "eval_every", "output",
    "eps_grid", "B", "adaptive_server",
}
REQUIRED = ("problem", "algorithm", "eta")


class ConfigError(ValueError):
    pass


def problem_params(name: str) -> Dict[str, Any]:
    """Tunable parameters of a problem generator and their defaults."""
    sig = inspect.signature(PROBLEMS[name])
    return {k: p.default for k, p in sig.parameters.items() if k != "rng"}


@dataclass
class ExperimentConfig:
    problem: str
    algorithm: str
    hp: HyperParams
    seed: int = 0
    problem_params: Dict[str, Any] = field(default_factory=dict)
    problem_seed: Optional[int] = None
    eval_every: int = 1
    output: Optional[str] = None
    eps_grid: tuple = DEFAULT_EPS_GRID
    B: Optional[float] = None
    adaptive_server: bool = False
    warnings: List[str] = field(default_factory=list)

    def build_problem(self) -> MixedProblem:
        seed = self.seed if self.problem_seed is None else self.problem_seed
        return PROBLEMS[self.problem](rng=RngStream(seed), **self.problem_params)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


def _coerce(key: str, value, kind):
    try:
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}") from None
    return value


_HP_TYPES = {
    "eta": float, "eta_s": float, "eta_c": float, "eta_m": float, "K": int, "S": int,
    "client_batch": int, "central_batch": int, "T": int, "client_opt": str, "central_opt": str,
    "server_opt": str, "merge_opt": str, "adam_beta1": float, "adam_beta2": float,
    "adam_epsilon": float, "bytes_per_element": int,
}


def config_from_dict(doc: Dict[str, Any]) -> ExperimentConfig:
    """Validate a flat mapping and apply defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key/value mapping")
    missing = [k for k in REQUIRED if k not in doc]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    name = doc["problem"]
    if name not in PROBLEMS:
        raise ConfigError(f"problem: unknown problem {name!r}; expected one of {sorted(PROBLEMS)}")
    pdefaults = problem_params(name)
    unknown = sorted(set(doc) - RUN_KEYS - set(pdefaults))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    for k, v in doc.items():
        if isinstance(v, (dict, list)) and k != "eps_grid":
            raise ConfigError(f"{k}: nested values are not allowed")
    algorithm = doc["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm: unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")

    hp_kwargs = {k: _coerce(k, doc[k], _HP_TYPES[k]) for k in _HP_KEYS if k in doc}
    hp_kwargs.setdefault("T", 100)
    for k in ("eta", "eta_s", "eta_c", "eta_m"):
        if k in hp_kwargs and not hp_kwargs[k] > 0:
            raise ConfigError(f"{k}: learning rates must be positive, got {hp_kwargs[k]}")
    hp = HyperParams(**hp_kwargs)

    pparams = {}
    for k, default in pdefaults.items():
        if k in doc:
            kind = type(default) if default is not None else (float if k in ("offset",) else int)
            pparams[k] = _coerce(k, doc[k], kind)

    adaptive = _coerce("adaptive_server", doc.get("adaptive_server", False), bool)
    if hp.server_opt == "adam" and not adaptive:
        raise ConfigError("server_opt: adam requires adaptive_server: true")
    if hp.server_opt == "adam" and algorithm == "central-oracle":
        raise ConfigError("server_opt: the central-oracle baseline has no server optimizer")

    eps_grid = doc.get("eps_grid", DEFAULT_EPS_GRID)
    if not isinstance(eps_grid, (list, tuple)) or not eps_grid:
        raise ConfigError("eps_grid: expected a non-empty list of positive numbers")
    eps_grid = tuple(_coerce("eps_grid", e, float) for e in eps_grid)
    if any(e <= 0 for e in eps_grid):
        raise ConfigError("eps_grid: values must be positive")

    cfg = ExperimentConfig(
        problem=name,
        algorithm=algorithm,
        hp=hp,
        seed=_coerce("seed", doc.get("seed", 0), int),
        problem_params=pparams,
        problem_seed=_coerce("problem_seed", doc["problem_seed"], int) if "problem_seed" in doc else None,
        eval_every=_coerce("eval_every", doc.get("eval_every", 1), int),
        output=doc.get("output"),
        eps_grid=eps_grid,
        B=_coerce("B", doc["B"], float) if "B" in doc else None,
        adaptive_server=adaptive,
    )
    if cfg.eval_every < 1:
        raise ConfigError("eval_every: must be >= 1")
    if cfg.B is not None and cfg.B < 1:
        raise ConfigError("B: must be >= 1")
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check cross-field constraints and record step-size warnings on ``cfg``."""
    n_clients = cfg.problem_params.get("n_clients", problem_params(cfg.problem)["n_clients"])
    if cfg.hp.S > n_clients:
        raise ConfigError(f"S: cohort size S={cfg.hp.S} exceeds number of clients N={n_clients}")
    try:
        cfg.hp.validate(n_clients)
    except HyperParamError as e:
        raise ConfigError(str(e)) from None
    try:
        problem = cfg.build_problem()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"problem: {e}") from None
    cfg.warnings = step_size_warnings(problem, cfg.algorithm, cfg.hp, cfg.B)
    for w in cfg.warnings:
        logger.warning(w)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config: {e}") from None
    return config_from_dict(doc if doc is not None else {})


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------- running


def run_trajectory(cfg: ExperimentConfig, problem: Optional[MixedProblem] = None) -> Trajectory:
    problem = problem or cfg.build_problem()
    return simulate(problem, cfg.algorithm, cfg.hp, cfg.seed, eval_every=cfg.eval_every)


def run_experiment(cfg: ExperimentConfig) -> List[MetricsRow]:
    """Rows for every ``eval_every`` round plus the closing summary row.

    Raises:
        DivergenceError: carrying the rows recorded before the failure.
    """
    return run_trajectory(cfg).rows


def write_csv(rows: Sequence[MetricsRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_fields())


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


# ---------------------------------------------------------------- presets


def _quad(**kw):
    base = {"problem": "quadratic-pair", "dim": 10, "n_clients": 10, "beta": 4.0, "mu": 1.0}
    base.update(kw)
    return base


def _kone_equivalence():
    common = _quad(n_clients=50, S=10, sigma=0.1, sigma_c=0.1, separation=2.0,
                   eta=0.05, eta_s=1.0, K=1, eta_m=1.0, T=200, seed=7, client_batch=1, central_batch=1)
    return [dict(common, algorithm=a) for a in ("pt", "owgt", "twgt")]


# Equal central/federated curvature, so B = 1 exactly and every algorithm's
# fixed point is the joint minimizer.
CONVERGENCE_BETA, CONVERGENCE_MU = 4.0, 1.0


def _convergence():
    out = []
    for a in ("pt", "owgt", "twgt"):
        eta_tilde = 0.5 * step_size_ceiling(a, "strongly-convex", CONVERGENCE_BETA, CONVERGENCE_MU, 1.0)
        K = 4
        out.append(_quad(algorithm=a, separation=4.0, init_scale=3.0, S=5, K=K, eta=eta_tilde / K,
                         T=5000, seed=11, eval_every=50))
    return out


# Both problems share a 3x curvature mismatch between the central and the
# federated loss. Low G: coincident centers (G~ vanishes at the optimum).
# High G: centers 40 apart. 2-way transfer merges with eta_m = 1/2 because
# each of its two paths already carries the full mixed gradient.
HIGH_G = {"cent_curvature_scale": 3.0, "separation": 40.0}
LOW_G = {"cent_curvature_scale": 3.0, "separation": 0.0}


def _high_g():
    out = []
    beta = 4.0 * 3.0
    K = 4
    for label, prob in (("low", LOW_G), ("high", HIGH_G)):
        for a, eta_m in (("pt", 1.0), ("twgt", 0.5)):
            out.append(_quad(algorithm=a, problem_seed=3, S=2, K=K, eta=1.0 / (8 * beta) / K,
                             eta_m=eta_m, T=3000, seed=1, **prob))
    return out


CENTRAL_VARIANCE_ETA_TILDE = 0.02


def _central_variance():
    out = []
    for a in ("owgt", "twgt"):
        for K in (1, 4, 16):
            out.append(_quad(algorithm=a, separation=2.0, sigma=0.0, sigma_c=1.0, S=2, K=K,
                             eta=CENTRAL_VARIANCE_ETA_TILDE / K, T=3000, seed=11, problem_seed=5,
                             eval_every=3000))
    return out


def _label_imbalance():
    common = {"problem": "label-imbalance", "dim": 10, "n_clients": 50, "per_client": 20,
              "separation": 4.0, "S": 10, "K": 4, "client_batch": 5, "eta": 0.1, "T": 1000,
              "seed": 3, "problem_seed": 2, "eval_every": 100}
    out = []
    for a in ("central-oracle", "fedavg", "pt", "owgt", "twgt"):
        # central batch sized so central and client variance weigh the same
        cb = 10 * 5 * (4 if a == "owgt" else 1)
        out.append(dict(common, algorithm=a, central_batch=cb))
    return out


def _spreadout_cost():
    common = {"problem": "spreadout", "n_items": 40, "embed_dim": 8, "n_clients": 20, "S": 5,
              "K": 2, "client_batch": 4, "eta": 0.05, "T": 50, "seed": 5, "eval_every": 10}
    return [dict(common, algorithm=a) for a in ("fedavg", "pt", "owgt", "twgt")]


_PRESETS = {
    "kone-equivalence": _kone_equivalence,
    "quadratic-convex-convergence": _convergence,
    "high-g-ordering": _high_g,
    "central-variance-sweep": _central_variance,
    "label-imbalance-oracle": _label_imbalance,
    "spreadout-cost-audit": _spreadout_cost,
}


def list_presets() -> List[str]:
    return list(_PRESETS)


def preset_documents(name: str) -> List[Dict[str, Any]]:
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {list_presets()}")
    return _PRESETS[name]()


def preset_configs(name: str) -> List[ExperimentConfig]:
    return [config_from_dict(d) for d in preset_documents(name)]


def run_preset(name: str) -> List[MetricsRow]:
    rows: List[MetricsRow] = []
    for cfg in preset_configs(name):
        rows.extend(run_experiment(cfg))
    return rows
