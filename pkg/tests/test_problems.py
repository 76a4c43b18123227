import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixedfl.params import DimensionMismatchError, RngStream
from mixedfl.problems import (
    ClientDataset,
    FederatedLoss,
    HingeLoss,
    LogisticLoss,
    MixedProblem,
    QuadraticLoss,
    SingularCurvatureError,
    SpreadoutRegularizer,
    epoch_batches,
    exact_minimizer,
    finite_difference_grad,
    full_grad,
    loss_value,
    make_label_imbalance_task,
    make_quadratic_pair,
    make_spreadout_task,
    stochastic_grad,
)


def _pair_problem(fed_quad, cent_quad):
    return MixedProblem("pair", FederatedLoss([fed_quad]), cent_quad, np.zeros(fed_quad.dim))


# ------------------------------------------------------------ quadratic


def test_quadratic_loss_examples():
    q = QuadraticLoss(np.ones(2), [0, 0])
    assert loss_value(q, np.zeros(2)) == 0.0
    assert loss_value(q, np.array([3.0, 4.0])) == 12.5
    # hand evaluation: 0.5 * 0.5 * (1*2^2 + 4*1^2)
    q2 = QuadraticLoss([1.0, 4.0], [1, 0], weight=0.5)
    assert loss_value(q2, np.array([3.0, 1.0])) == 2.0


def test_quadratic_grad_examples():
    q = QuadraticLoss(np.eye(2), [0, 0])
    assert np.array_equal(full_grad(q, np.array([3.0, 4.0])), [3, 4])
    q = QuadraticLoss(np.ones(3), [1, 2, 3])
    assert np.array_equal(full_grad(q, np.array([1.0, 2.0, 3.0])), np.zeros(3))


def test_quadratic_dense_matches_diagonal():
    diag = QuadraticLoss([1.0, 2.0, 5.0], [1, -1, 0], weight=0.3)
    dense = QuadraticLoss(np.diag([1.0, 2.0, 5.0]), [1, -1, 0], weight=0.3)
    x = np.array([0.2, 0.7, -1.5])
    assert dense.loss(x) == pytest.approx(diag.loss(x), rel=1e-15)
    np.testing.assert_allclose(dense.grad(x), diag.grad(x), rtol=1e-15)
    assert (dense.mu, dense.beta) == pytest.approx((0.3, 1.5))


def test_quadratic_rejects_bad_input():
    with pytest.raises(ValueError):
        QuadraticLoss([[1.0, 2.0], [0.0, 1.0]], [0, 0])
    with pytest.raises(ValueError):
        QuadraticLoss([-1.0, 1.0], [0, 0])
    with pytest.raises(DimensionMismatchError):
        QuadraticLoss([1.0, 1.0], [0, 0]).loss(np.zeros(3))


def test_stochastic_grad_noiseless_equals_full():
    q = QuadraticLoss([1.0, 3.0], [1, 1])
    x = np.array([0.5, -2.0])
    assert np.array_equal(stochastic_grad(q, x, 4, RngStream(1)), q.grad(x))


@pytest.mark.parametrize("sigma", [0.1, 1.0])
def test_stochastic_grad_unbiased_and_variance(sigma):
    n, dim = 100_000, 4
    q = QuadraticLoss(np.linspace(1, 3, dim), np.arange(dim), sigma=sigma)
    x = np.array([1.0, -1.0, 0.5, 2.0])
    g = q.grad(x)
    draws = np.array([q.batch_grad(x, b) for b in q.draw_batches(1, n, RngStream(42))])
    # per-coordinate std is sigma/sqrt(dim) <= sigma
    assert np.all(np.abs(draws.mean(axis=0) - g) <= 3 * sigma / np.sqrt(n))
    mse = np.mean(np.sum((draws - g) ** 2, axis=1))
    assert mse == pytest.approx(sigma**2, rel=0.05)


def test_draw_batches_prefix_consistent():
    q = QuadraticLoss(np.ones(3), np.zeros(3), sigma=1.0)
    a = q.draw_batches(1, 3, RngStream(5))
    b = q.draw_batches(1, 6, RngStream(5))
    for u, v in zip(a, b):
        assert np.array_equal(u, v)


# ------------------------------------------------------------ minimizer


def test_exact_minimizer_coincident_centers():
    a = np.array([1.0, -2.0])
    x_star, _ = exact_minimizer(_pair_problem(QuadraticLoss([1, 2], a), QuadraticLoss([3, 1], a)))
    np.testing.assert_allclose(x_star, a, atol=1e-15)


def test_exact_minimizer_symmetric():
    p = _pair_problem(QuadraticLoss(np.eye(2), [0, 0]), QuadraticLoss(np.eye(2), [2, 0]))
    x_star, f_star = exact_minimizer(p)
    np.testing.assert_allclose(x_star, [1, 0], atol=1e-15)
    assert f_star == pytest.approx(1.0)


def test_exact_minimizer_matches_gradient_descent():
    gen = np.random.default_rng(0)
    dim = 5

    def spd():
        m = gen.normal(size=(dim, dim))
        return m @ m.T / dim + 0.5 * np.eye(dim)

    clients = [QuadraticLoss(spd(), gen.normal(size=dim), 0.5) for _ in range(3)]
    cent = QuadraticLoss(spd(), gen.normal(size=dim), 0.5)
    p = MixedProblem("spd", FederatedLoss(clients), cent, np.zeros(dim))
    x_star, f_star = exact_minimizer(p)

    # independent oracle: plain gradient descent on the summed gradient
    hs = [c.weight * c.curvature for c in clients]
    hc = cent.weight * cent.curvature
    lr = 1.0 / np.linalg.eigvalsh(sum(hs) / 3 + hc).max()
    x = np.zeros(dim)
    for _ in range(20_000):
        g = sum(h @ (x - c.center) for h, c in zip(hs, clients)) / 3 + hc @ (x - cent.center)
        x = x - lr * g
    np.testing.assert_allclose(x_star, x, atol=1e-8)
    assert np.linalg.norm(p.fed.grad(x_star) + p.cent.grad(x_star)) <= 1e-8
    assert f_star == pytest.approx(p.loss(x), abs=1e-12)


def test_exact_minimizer_errors():
    with pytest.raises(SingularCurvatureError):
        exact_minimizer(_pair_problem(QuadraticLoss([1, 0], [0, 0]), QuadraticLoss([1, 0], [1, 0])))
    task = make_label_imbalance_task(n_clients=2, per_client=3, n_eval=4)
    with pytest.raises(TypeError):
        exact_minimizer(task)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 10.0), st.floats(0.2, 5.0))
def test_generated_pair_is_stationary_at_optimum(seed, separation, scale):
    p = make_quadratic_pair(dim=6, n_clients=4, separation=separation, cent_curvature_scale=scale,
                            heterogeneity=0.3, rng=RngStream(seed))
    g = p.fed.grad(p.x_star) + p.cent.grad(p.x_star)
    assert np.linalg.norm(g) <= 1e-8


def test_quadratic_pair_eigen_bounds():
    p = make_quadratic_pair(dim=5, beta=4.0, mu=1.0, rng=RngStream(1))
    assert p.fed.clients[0].mu == pytest.approx(1.0) and p.fed.clients[0].beta == pytest.approx(4.0)
    assert p.cent.mu == pytest.approx(1.0) and p.cent.beta == pytest.approx(4.0)
    assert (p.mu, p.beta) == pytest.approx((1.0, 4.0))
    assert len({id(c) for c in p.fed.clients}) == 1


def test_smoothness_witness():
    q = QuadraticLoss([1.0, 2.5, 4.0], np.zeros(3))
    gen = np.random.default_rng(3)
    for _ in range(100):
        x, y = gen.normal(size=3), gen.normal(size=3)
        assert np.linalg.norm(q.grad(x) - q.grad(y)) <= q.beta * np.linalg.norm(x - y) * (1 + 1e-12)
    top = np.array([0.0, 0.0, 1.0])
    x = gen.normal(size=3)
    assert np.linalg.norm(q.grad(x + top) - q.grad(x)) == pytest.approx(q.beta)


def test_convexity_witness():
    p = make_quadratic_pair(dim=4, separation=3.0, rng=RngStream(2))
    mu = np.linalg.eigvalsh(np.diag(p.fed.clients[0].curvature * p.w_f + p.cent.curvature * p.w_c)).min()
    gen = np.random.default_rng(4)
    for _ in range(200):
        x, y = gen.normal(size=4) * 3, gen.normal(size=4) * 3
        lhs = p.loss(y)
        rhs = p.loss(x) + p.grad(x) @ (y - x) + 0.5 * mu * np.sum((y - x) ** 2)
        assert lhs >= rhs - 1e-10


# ------------------------------------------------------------ datasets


def test_epoch_batches_cover_each_example_once_per_epoch():
    batches = epoch_batches(10, 3, 6, RngStream(0))
    first = np.concatenate(batches[:3])
    assert len(set(first.tolist())) == 9
    assert all(len(b) == 3 for b in batches)
    with pytest.raises(ValueError):
        epoch_batches(2, 3, 1, RngStream(0))


def test_label_imbalance_labels():
    p = make_label_imbalance_task(n_clients=5, per_client=8, n_eval=20, rng=RngStream(1))
    for c in p.extras["client_data"]:
        assert np.all(c.labels == 1) and c.cache_size == 8
    assert np.all(p.extras["central_data"].labels == 0)
    assert p.dim == 11


def test_label_imbalance_pooled_training_reaches_095():
    p = make_label_imbalance_task(dim=10, separation=4.0, rng=RngStream(2))
    data = p.extras["pooled_data"]
    X, y = data.features, data.labels
    # independent centralized oracle: full-batch gradient descent on the mean log-loss
    x = np.zeros(X.shape[1])
    for _ in range(500):
        z = X @ x
        x -= 0.5 * X.T @ (1 / (1 + np.exp(-z)) - y) / len(y)
    assert p.evaluate(x)["balanced_accuracy"] >= 0.95


def test_logistic_loss_hand_value():
    data = ClientDataset(0, np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([1.0, 0.0]))
    loss = LogisticLoss(data, weight=2.0)
    x = np.array([0.5, 0.25])
    z = np.array([0.5, 0.5])
    expected = 2.0 * np.mean([np.log1p(np.exp(-z[0])), np.log1p(np.exp(z[1]))])
    assert loss.loss(x) == pytest.approx(expected, rel=1e-14)


def test_logistic_loss_extreme_margins_are_finite():
    data = ClientDataset(0, np.array([[1.0]]), np.array([0.0]))
    loss = LogisticLoss(data)
    assert loss.loss(np.array([1e4])) == pytest.approx(1e4)
    assert np.all(np.isfinite(loss.grad(np.array([-1e4]))))


# ------------------------------------------------------------ spreadout


def test_spreadout_examples():
    reg = SpreadoutRegularizer(3, 3)
    assert reg.loss(np.eye(3).ravel()) == 0.0
    e = np.zeros((3, 3))
    e[0, 0] = e[1, 0] = 1.0
    assert reg.loss(e.ravel()) == 1.0


def test_hinge_touches_only_cached_rows():
    h = HingeLoss(np.array([[0, 2], [2, 0]]), n_items=5, embed_dim=3)
    g = h.grad(np.random.default_rng(0).normal(size=15) * 0.1).reshape(5, 3)
    assert set(h.touched_rows.tolist()) == {0, 2}
    assert np.all(g[[1, 3, 4]] == 0)


def test_spreadout_task_footprints():
    p = make_spreadout_task(n_items=20, embed_dim=4, n_clients=6, items_per_client=3, rng=RngStream(0))
    assert all(0 < fp <= 3 * 4 for fp in p.client_footprint)
    assert p.regime == "nonconvex"


# ------------------------------------------------------------ finite differences


def _fd_agrees(oracle, x, rel=1e-5):
    fd = finite_difference_grad(oracle.loss, x)
    g = oracle.grad(x)
    return np.linalg.norm(fd - g) <= rel * max(np.linalg.norm(g), 1e-8)


def test_fd_quadratic_dense():
    gen = np.random.default_rng(9)
    m = gen.normal(size=(4, 4))
    q = QuadraticLoss(m @ m.T, gen.normal(size=4), weight=0.7)
    assert all(_fd_agrees(q, gen.normal(size=4)) for _ in range(10))


def test_fd_federated_sum():
    p = make_quadratic_pair(dim=3, n_clients=3, heterogeneity=1.0, rng=RngStream(0))
    assert _fd_agrees(p.fed, np.array([0.3, -1.0, 2.0]))
