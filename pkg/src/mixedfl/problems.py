"""Loss oracles and synthetic mixed federated/centralized tasks.

Every oracle exposes the same small surface:

* ``dim``: parameter dimension
* ``loss(x)`` / ``grad(x)``: deterministic full-data value and gradient
* ``draw_batches(batch_size, n, rng)``: ``n`` batches drawn from an
  :class:`~mixedfl.params.RngStream`; the first ``m`` batches of a draw of
  ``n`` equal a draw of ``m`` from the same stream
* ``batch_grad(x, batch)``: gradient on one drawn batch
* ``stochastic_grad(x, batch_size, rng)``: shorthand for one batch

Relative loss weights (``w_f``, ``w_c``) are folded into each oracle as a
multiplicative ``weight``; the engine just sums the federated and central
terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np

from .params import DimensionMismatchError, RngStream, as_vector


class LossOracle(Protocol):
    dim: int

    def loss(self, x: np.ndarray) -> float: ...

    def grad(self, x: np.ndarray) -> np.ndarray: ...

    def draw_batches(self, batch_size: int, n: int, rng: RngStream) -> list: ...

    def batch_grad(self, x: np.ndarray, batch: Any) -> np.ndarray: ...

    def stochastic_grad(self, x: np.ndarray, batch_size: int, rng: RngStream) -> np.ndarray: ...


class SingularCurvatureError(np.linalg.LinAlgError):
    pass


def _check_x(oracle, x: np.ndarray) -> None:
    if x.shape != (oracle.dim,):
        raise DimensionMismatchError(x.size, oracle.dim, "parameter")


class _OracleBase:
    dim: int

    def stochastic_grad(self, x: np.ndarray, batch_size: int, rng: RngStream) -> np.ndarray:
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        return self.batch_grad(x, self.draw_batches(batch_size, 1, rng)[0])


class QuadraticLoss(_OracleBase):
    """``(w/2) (x - c)^T A (x - c)`` with isotropic Gaussian gradient noise.

    ``curvature`` is either a 1-D array (diagonal of ``A``) or a dense
    symmetric matrix. ``mu`` and ``beta`` are the extreme eigenvalues of the
    weighted Hessian ``w A``. Stochastic gradients add noise with per
    coordinate variance ``sigma**2 / dim`` so that the expected squared error
    is exactly ``sigma**2``. The batch size does not change the noise level:
    ``sigma`` already describes one batch.
    """

    def __init__(self, curvature, center, weight: float = 1.0, sigma: float = 0.0) -> None:
        self.center = as_vector(center)
        self.dim = self.center.size
        a = np.array(curvature, dtype=np.float64)
        if a.ndim == 1:
            if a.size != self.dim:
                raise DimensionMismatchError(a.size, self.dim, "curvature")
            eig = a
        elif a.ndim == 2:
            if a.shape != (self.dim, self.dim):
                raise DimensionMismatchError(a.shape[0], self.dim, "curvature")
            if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
                raise ValueError("curvature matrix must be symmetric")
            a = 0.5 * (a + a.T)
            eig = np.linalg.eigvalsh(a)
        else:
            raise ValueError("curvature must be a vector (diagonal) or a square matrix")
        if weight <= 0:
            raise ValueError(f"weight must be positive, got {weight}")
        if eig.min() < -1e-12 * max(1.0, abs(eig.max())):
            raise ValueError("curvature must be positive semi-definite")
        if sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.curvature = a
        self.weight = float(weight)
        self.sigma = float(sigma)
        self.mu = float(self.weight * max(eig.min(), 0.0))
        self.beta = float(self.weight * eig.max())

    @property
    def hessian(self) -> np.ndarray:
        a = self.curvature if self.curvature.ndim == 2 else np.diag(self.curvature)
        return self.weight * a

    def _apply(self, v: np.ndarray) -> np.ndarray:
        if self.curvature.ndim == 1:
            return self.curvature * v
        return self.curvature @ v

    def loss(self, x):
        _check_x(self, x)
        r = x - self.center
        return 0.5 * self.weight * float(r @ self._apply(r))

    def grad(self, x):
        _check_x(self, x)
        return self.weight * self._apply(x - self.center)

    def draw_batches(self, batch_size, n, rng):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if self.sigma == 0.0:
            return [None] * n
        noise = rng.generator().normal(0.0, self.sigma / np.sqrt(self.dim), size=(n, self.dim))
        return list(noise)

    def batch_grad(self, x, batch):
        g = self.grad(x)
        return g if batch is None else g + batch


@dataclass
class ClientDataset:
    """Examples cached on one client (or in the datacenter)."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray

    @property
    def cache_size(self) -> int:
        return int(len(self.labels))


def epoch_batches(n_examples: int, batch_size: int, n: int, rng: RngStream) -> List[np.ndarray]:
    """Index batches without replacement, reshuffled every epoch.

    A partial batch at the end of an epoch is dropped.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if batch_size > n_examples:
        raise ValueError(
            f"batch_size {batch_size} exceeds dataset size {n_examples} "
            "(sampling without replacement)"
        )
    per_epoch = n_examples // batch_size
    out: List[np.ndarray] = []
    epoch = 0
    while len(out) < n:
        perm = rng.child(epoch).generator().permutation(n_examples)
        for j in range(min(per_epoch, n - len(out))):
            out.append(perm[j * batch_size:(j + 1) * batch_size])
        epoch += 1
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LogisticLoss(_OracleBase):
    """Weighted mean binary cross-entropy of a linear model on a dataset."""

    def __init__(self, data: ClientDataset, weight: float = 1.0) -> None:
        if data.cache_size == 0:
            raise ValueError("logistic loss needs at least one example")
        self.data = data
        self.X = np.asarray(data.features, dtype=np.float64)
        self.y = np.asarray(data.labels, dtype=np.float64)
        self.dim = self.X.shape[1]
        self.weight = float(weight)

    def _loss_on(self, x, X, y):
        z = X @ x
        # softplus(z) - y z == -[y log s(z) + (1-y) log(1-s(z))]
        return self.weight * float(np.mean(np.logaddexp(0.0, z) - y * z))

    def _grad_on(self, x, X, y):
        r = _sigmoid(X @ x) - y
        return self.weight * (X.T @ r) / len(y)

    def loss(self, x):
        _check_x(self, x)
        return self._loss_on(x, self.X, self.y)

    def grad(self, x):
        _check_x(self, x)
        return self._grad_on(x, self.X, self.y)

    def draw_batches(self, batch_size, n, rng):
        return epoch_batches(self.data.cache_size, batch_size, n, rng)

    def batch_grad(self, x, batch):
        _check_x(self, x)
        return self._grad_on(x, self.X[batch], self.y[batch])

    def predict(self, x: np.ndarray, X: np.ndarray) -> np.ndarray:
        return (X @ x >= 0.0).astype(np.int64)

    @property
    def beta(self) -> float:
        # Hessian of mean log-loss is bounded by X^T X / (4 m)
        return self.weight * float(np.linalg.eigvalsh(self.X.T @ self.X / len(self.y)).max()) / 4.0


class HingeLoss(_OracleBase):
    """Margin-1 hinge on (context, next) item pairs of an embedding table.

    ``x`` is the flattened ``n_items x embed_dim`` table. Only rows named in
    ``pairs`` receive gradient.
    """

    def __init__(self, pairs: np.ndarray, n_items: int, embed_dim: int,
                 weight: float = 1.0, margin: float = 1.0) -> None:
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(self.pairs) == 0:
            raise ValueError("hinge loss needs at least one pair")
        self.n_items = n_items
        self.embed_dim = embed_dim
        self.dim = n_items * embed_dim
        self.weight = float(weight)
        self.margin = float(margin)

    @property
    def touched_rows(self) -> np.ndarray:
        return np.unique(self.pairs)

    def _loss_on(self, x, pairs):
        e = x.reshape(self.n_items, self.embed_dim)
        s = np.einsum("ij,ij->i", e[pairs[:, 0]], e[pairs[:, 1]])
        return self.weight * float(np.mean(np.maximum(0.0, self.margin - s)))

    def _grad_on(self, x, pairs):
        e = x.reshape(self.n_items, self.embed_dim)
        ctx, nxt = pairs[:, 0], pairs[:, 1]
        s = np.einsum("ij,ij->i", e[ctx], e[nxt])
        active = s < self.margin
        g = np.zeros_like(e)
        coef = -self.weight / len(pairs)
        np.add.at(g, ctx[active], coef * e[nxt[active]])
        np.add.at(g, nxt[active], coef * e[ctx[active]])
        return g.reshape(-1)

    def loss(self, x):
        _check_x(self, x)
        return self._loss_on(x, self.pairs)

    def grad(self, x):
        _check_x(self, x)
        return self._grad_on(x, self.pairs)

    def draw_batches(self, batch_size, n, rng):
        return epoch_batches(len(self.pairs), batch_size, n, rng)

    def batch_grad(self, x, batch):
        _check_x(self, x)
        return self._grad_on(x, self.pairs[batch])


class SpreadoutRegularizer(_OracleBase):
    """``w * sum_{i<j} (e_i . e_j)**2`` over all rows of an embedding table.

    Zero exactly when the rows are mutually orthogonal. The regularizer has no
    data, so stochastic gradients are the full gradient plus optional
    isotropic noise of expected squared norm ``sigma**2``.
    """

    def __init__(self, n_items: int, embed_dim: int, weight: float = 1.0, sigma: float = 0.0) -> None:
        if n_items < 2:
            raise ValueError("spreadout needs n_items >= 2")
        self.n_items = n_items
        self.embed_dim = embed_dim
        self.dim = n_items * embed_dim
        self.weight = float(weight)
        self.sigma = float(sigma)

    def _offdiag_gram(self, e):
        g = e @ e.T
        np.fill_diagonal(g, 0.0)
        return g

    def loss(self, x):
        _check_x(self, x)
        g = self._offdiag_gram(x.reshape(self.n_items, self.embed_dim))
        return self.weight * 0.5 * float(np.sum(g * g))

    def grad(self, x):
        _check_x(self, x)
        e = x.reshape(self.n_items, self.embed_dim)
        return (self.weight * 2.0 * (self._offdiag_gram(e) @ e)).reshape(-1)

    def draw_batches(self, batch_size, n, rng):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if self.sigma == 0.0:
            return [None] * n
        return list(rng.generator().normal(0.0, self.sigma / np.sqrt(self.dim), size=(n, self.dim)))

    def batch_grad(self, x, batch):
        g = self.grad(x)
        return g if batch is None else g + batch


class FederatedLoss(_OracleBase):
    """Mean of per-client losses.

    Drawing batches from the federated loss as a whole (used only by the
    pooled-data baseline) picks a uniformly random client per batch.
    """

    def __init__(self, clients: Sequence[LossOracle]) -> None:
        if not clients:
            raise ValueError("federated loss needs at least one client")
        self.clients = list(clients)
        self.dim = self.clients[0].dim
        for c in self.clients:
            if c.dim != self.dim:
                raise DimensionMismatchError(c.dim, self.dim, "client oracle")
        # IID clients often share one oracle object; evaluate each once
        counts: Dict[int, list] = {}
        for c in self.clients:
            counts.setdefault(id(c), [c, 0])[1] += 1
        self._distinct = [(c, n / len(self.clients)) for c, n in counts.values()]

    @property
    def n_clients(self) -> int:
        return len(self.clients)

    def loss(self, x):
        return float(sum(w * c.loss(x) for c, w in self._distinct))

    def grad(self, x):
        return sum(w * c.grad(x) for c, w in self._distinct)

    def draw_batches(self, batch_size, n, rng):
        which = rng.child(0).generator().integers(0, self.n_clients, size=n)
        return [(int(i), self.clients[i].draw_batches(batch_size, 1, rng.child(1, k))[0])
                for k, i in enumerate(which)]

    def batch_grad(self, x, batch):
        i, inner = batch
        return self.clients[i].batch_grad(x, inner)


class SumLoss(_OracleBase):
    """Sum of oracles sharing a dimension; one batch from each per draw."""

    def __init__(self, parts: Sequence[LossOracle]) -> None:
        self.parts = list(parts)
        self.dim = self.parts[0].dim

    def loss(self, x):
        return sum(p.loss(x) for p in self.parts)

    def grad(self, x):
        return sum(p.grad(x) for p in self.parts)

    def draw_batches(self, batch_size, n, rng):
        per_part = [p.draw_batches(batch_size, n, rng.child(j)) for j, p in enumerate(self.parts)]
        return list(zip(*per_part))

    def batch_grad(self, x, batch):
        return sum(p.batch_grad(x, b) for p, b in zip(self.parts, batch))


@dataclass
class MixedProblem:
    """``f(x) = F_f(x) + F_c(x)`` plus what the harness needs to score it.

    ``beta``/``mu`` bound the Hessians of the individual losses when known.
    ``pooled`` is the loss used by the centralized "oracle" baseline.
    ``client_footprint[i]`` is the number of parameters client ``i`` must
    download (all of them unless the task is sparse).
    """

    name: str
    fed: FederatedLoss
    cent: LossOracle
    x0: np.ndarray
    w_f: float = 0.5
    w_c: float = 0.5
    x_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    beta: Optional[float] = None
    mu: Optional[float] = None
    regime: str = "nonconvex"
    pooled: Optional[LossOracle] = None
    evaluate: Optional[Callable[[np.ndarray], Dict[str, float]]] = None
    client_footprint: Optional[List[int]] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.fed.dim

    @property
    def n_clients(self) -> int:
        return self.fed.n_clients

    def loss_fed(self, x) -> float:
        return self.fed.loss(x)

    def loss_cent(self, x) -> float:
        return self.cent.loss(x)

    def loss(self, x) -> float:
        return self.fed.loss(x) + self.cent.loss(x)

    def grad(self, x) -> np.ndarray:
        return self.fed.grad(x) + self.cent.grad(x)

    def pooled_oracle(self) -> LossOracle:
        return self.pooled if self.pooled is not None else SumLoss([self.fed, self.cent])


def loss_value(oracle: LossOracle, x: np.ndarray) -> float:
    return oracle.loss(x)


def full_grad(oracle: LossOracle, x: np.ndarray) -> np.ndarray:
    return oracle.grad(x)


def stochastic_grad(oracle: LossOracle, x: np.ndarray, batch_size: int, rng: RngStream) -> np.ndarray:
    return oracle.stochastic_grad(x, batch_size, rng)


def exact_minimizer(problem: MixedProblem) -> tuple[np.ndarray, float]:
    """Closed-form minimizer of a mixed problem made of quadratics.

    Solves ``(mean_i H_i + H_c) x = mean_i H_i a_i + H_c b``.

    Raises:
        TypeError: if any loss is not a :class:`QuadraticLoss`.
        SingularCurvatureError: if the combined Hessian is not positive definite.
    """
    quads = list(problem.fed.clients) + [problem.cent]
    if not all(isinstance(q, QuadraticLoss) for q in quads):
        raise TypeError("exact_minimizer needs quadratic client and central losses")
    n = problem.n_clients
    h = sum(q.hessian for q in problem.fed.clients) / n + problem.cent.hessian
    rhs = sum(q.hessian @ q.center for q in problem.fed.clients) / n + problem.cent.hessian @ problem.cent.center
    eig = np.linalg.eigvalsh(h)
    if eig.min() <= 1e-12 * max(1.0, eig.max()):
        raise SingularCurvatureError("combined curvature is not positive definite")
    x_star = np.linalg.solve(h, rhs)
    return x_star, problem.loss(x_star)


def finite_difference_grad(fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central differences with step ``1e-5 * (1 + max|x|)``."""
    h = 1e-5 * (1.0 + float(np.max(np.abs(x))))
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


# ---------------------------------------------------------------- generators


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    u = rng.normal(size=dim)
    return u / np.linalg.norm(u)


def make_quadratic_pair(
    dim: int = 10,
    n_clients: int = 10,
    beta: float = 4.0,
    mu: float = 1.0,
    separation: float = 2.0,
    sigma: float = 0.0,
    sigma_c: float = 0.0,
    w_f: float = 0.5,
    w_c: float = 0.5,
    cent_curvature_scale: float = 1.0,
    heterogeneity: float = 0.0,
    init_scale: float = 1.0,
    rng: RngStream | None = None,
) -> MixedProblem:
    """Two diagonal quadratics with centers ``+-separation/2`` along a random unit vector.

    The weighted Hessian of the federated loss has eigenvalues spread evenly on
    ``[mu, beta]``; the central one is that times ``cent_curvature_scale``.
    ``heterogeneity`` moves each client's center by an independent Gaussian
    offset of that scale (re-centered so the client mean is unchanged); the
    default of zero gives IID clients.
    """
    if dim < 1 or n_clients < 1:
        raise ValueError("dim and n_clients must be positive")
    if not 0 <= mu <= beta or beta <= 0:
        raise ValueError(f"need 0 <= mu <= beta and beta > 0, got mu={mu}, beta={beta}")
    rng = rng or RngStream(0)
    gen = rng.child(0).generator()
    u = _unit(gen, dim)
    a = 0.5 * separation * u
    b = -0.5 * separation * u
    eig = np.linspace(mu, beta, dim) if dim > 1 else np.array([beta])
    curv_f = eig / w_f
    curv_c = cent_curvature_scale * eig / w_c
    offsets = np.zeros((n_clients, dim))
    if heterogeneity > 0:
        offsets = heterogeneity * rng.child(1).generator().normal(size=(n_clients, dim))
        offsets -= offsets.mean(axis=0)
    if heterogeneity > 0:
        clients = [QuadraticLoss(curv_f, a + offsets[i], w_f, sigma) for i in range(n_clients)]
    else:
        shared = QuadraticLoss(curv_f, a, w_f, sigma)
        clients = [shared] * n_clients
    cent = QuadraticLoss(curv_c, b, w_c, sigma_c)
    x0 = init_scale * rng.child(2).generator().normal(size=dim)
    prob = MixedProblem(
        name="quadratic-pair",
        fed=FederatedLoss(clients),
        cent=cent,
        x0=x0,
        w_f=w_f,
        w_c=w_c,
        beta=max(c.beta for c in [clients[0], cent]),
        mu=min(c.mu for c in [clients[0], cent]),
        regime="strongly-convex" if mu > 0 else "convex",
    )
    prob.pooled = SumLoss([prob.fed, cent])
    try:
        prob.x_star, prob.f_star = exact_minimizer(prob)
    except SingularCurvatureError:
        pass
    return prob


def make_label_imbalance_task(
    dim: int = 10,
    n_clients: int = 50,
    per_client: int = 20,
    n_central: int | None = None,
    separation: float = 4.0,
    offset: float | None = None,
    n_eval: int = 2000,
    w_f: float = 0.5,
    w_c: float = 0.5,
    rng: RngStream | None = None,
) -> MixedProblem:
    """Binary logistic regression where clients only ever see label 1.

    Class means sit at ``m +- separation/2 * u`` with unit-variance isotropic
    noise; ``m`` is a shared offset orthogonal to ``u`` of norm ``offset``
    (default ``separation``). A constant-1 intercept feature is appended, so
    the model dimension is ``dim + 1``. Clients hold positives only, the
    central dataset negatives only. ``problem.pooled`` is the loss on the
    union of both, and ``problem.evaluate(x)`` reports balanced accuracy on a
    fresh evaluation set with equal class counts.

    The offset matters: with both class means symmetric about the origin a
    model trained on positives alone already separates the classes.
    """
    if min(dim, n_clients, per_client) < 1:
        raise ValueError("all counts must be positive")
    if dim < 2:
        raise ValueError("label imbalance task needs dim >= 2")
    n_central = n_clients * per_client if n_central is None else n_central
    if n_central < 1:
        raise ValueError("n_central must be positive")
    rng = rng or RngStream(0)
    gen = rng.child(0).generator()
    u = _unit(gen, dim)
    m = gen.normal(size=dim)
    m -= (m @ u) * u
    m *= (separation if offset is None else offset) / np.linalg.norm(m)
    pos_mean = m + 0.5 * separation * u
    neg_mean = m - 0.5 * separation * u

    def sample(mean, n, stream):
        X = mean + stream.generator().normal(size=(n, dim))
        return np.hstack([X, np.ones((n, 1))])

    client_data = [
        ClientDataset(i, sample(pos_mean, per_client, rng.child(1, i)), np.ones(per_client))
        for i in range(n_clients)
    ]
    central_data = ClientDataset(-1, sample(neg_mean, n_central, rng.child(2)), np.zeros(n_central))
    half = n_eval // 2
    X_eval = np.vstack([sample(pos_mean, half, rng.child(3, 0)), sample(neg_mean, half, rng.child(3, 1))])
    y_eval = np.concatenate([np.ones(half), np.zeros(half)]).astype(np.int64)
    pooled_data = ClientDataset(
        -2,
        np.vstack([d.features for d in client_data] + [central_data.features]),
        np.concatenate([d.labels for d in client_data] + [central_data.labels]),
    )

    clients = [LogisticLoss(d, w_f) for d in client_data]
    cent = LogisticLoss(central_data, w_c)
    pooled = LogisticLoss(pooled_data, 1.0)

    def evaluate(x: np.ndarray) -> Dict[str, float]:
        pred = (X_eval @ x >= 0.0).astype(np.int64)
        tpr = float(np.mean(pred[y_eval == 1] == 1))
        tnr = float(np.mean(pred[y_eval == 0] == 0))
        return {"balanced_accuracy": 0.5 * (tpr + tnr), "tpr": tpr, "tnr": tnr}

    return MixedProblem(
        name="label-imbalance",
        fed=FederatedLoss(clients),
        cent=cent,
        x0=np.zeros(dim + 1),
        w_f=w_f,
        w_c=w_c,
        beta=max(max(c.beta for c in clients), cent.beta),
        mu=0.0,
        regime="convex",
        pooled=pooled,
        evaluate=evaluate,
        extras={"client_data": client_data, "central_data": central_data,
                "pooled_data": pooled_data, "eval": (X_eval, y_eval)},
    )


def make_spreadout_task(
    n_items: int = 40,
    embed_dim: int = 8,
    n_clients: int = 20,
    items_per_client: int = 6,
    pairs_per_client: int = 10,
    w_f: float = 0.5,
    w_c: float = 0.5,
    sigma_c: float = 0.0,
    init_scale: float = 0.5,
    rng: RngStream | None = None,
) -> MixedProblem:
    """Linear-embedding next-item toy with a server-side spreadout regularizer.

    Each client caches a few items and holds (context, next) pairs among
    them; its loss is a margin-1 hinge on the positive pair only. The central
    loss is the spreadout regularizer over the whole table.
    """
    if n_items < 2:
        raise ValueError("n_items must be >= 2")
    rng = rng or RngStream(0)
    k = min(items_per_client, n_items)
    clients = []
    for i in range(n_clients):
        g = rng.child(1, i).generator()
        items = g.choice(n_items, size=k, replace=False)
        pairs = np.stack([g.choice(items, size=pairs_per_client), g.choice(items, size=pairs_per_client)], axis=1)
        clients.append(HingeLoss(pairs, n_items, embed_dim, w_f))
    cent = SpreadoutRegularizer(n_items, embed_dim, w_c, sigma_c)
    x0 = init_scale * rng.child(0).generator().normal(size=n_items * embed_dim) / np.sqrt(embed_dim)
    prob = MixedProblem(
        name="spreadout",
        fed=FederatedLoss(clients),
        cent=cent,
        x0=x0,
        w_f=w_f,
        w_c=w_c,
        regime="nonconvex",
        client_footprint=[len(c.touched_rows) * embed_dim for c in clients],
    )
    prob.pooled = SumLoss([prob.fed, cent])
    return prob
