import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixedfl.metrics import (
    BgdSample,
    CostModel,
    bgd_approx,
    client_compute_savings,
    comm_overhead,
    comp_client_flops,
    convergence_report,
    max_bgd_over_window,
    regularizer_flops_per_round,
    rounds_to_eps,
    step_size_ceiling,
    steady_state_excess,
)
from mixedfl.params import DimensionMismatchError

v = np.array


def test_bgd_examples():
    s = bgd_approx(v([1.0, 0.0]), v([1.0, 0.0]), 0.5, 0.5)
    assert (s.g_tilde_sq, s.b_tilde_sq) == (0.0, 1.0)
    s = bgd_approx(v([1.0, 0.0]), v([-1.0, 0.0]), 0.5, 0.5)
    assert s.g_tilde_sq == 4.0 and s.b_tilde_sq is None
    s = bgd_approx(v([1.0, 0.0]), v([0.0, 1.0]), 0.5, 0.5)
    assert (s.g_tilde_sq, s.b_tilde_sq) == (2.0, 2.0)


@pytest.mark.parametrize("wf, wc", [(0.0, 1.0), (-0.5, 1.5), (0.5, 0.6)])
def test_bgd_rejects_weights(wf, wc):
    with pytest.raises(ValueError):
        bgd_approx(v([1.0]), v([1.0]), wf, wc)


def test_bgd_rejects_dims():
    with pytest.raises(DimensionMismatchError):
        bgd_approx(v([1.0]), v([1.0, 2.0]), 0.5, 0.5)


grads = arrays(np.float64, 4, elements=st.floats(-1e3, 1e3))
weights = st.floats(0.01, 0.99)


@given(grads, grads, weights)
def test_bgd_bounds(gf, gc, wf):
    s = bgd_approx(gf, gc, wf, 1.0 - wf)
    assert s.g_tilde_sq >= 0.0
    if s.b_tilde_sq is not None:
        assert s.b_tilde_sq >= 1.0 - 1e-9


@given(grads, grads, weights, st.floats(0.01, 100.0))
def test_bgd_scale_covariance(gf, gc, wf, c):
    a = bgd_approx(gf, gc, wf, 1.0 - wf)
    b = bgd_approx(c * gf, c * gc, wf, 1.0 - wf)
    scale = max(1.0, np.sum(gf**2) / wf + np.sum(gc**2) / (1 - wf))
    assert b.g_tilde_sq == pytest.approx(c * c * a.g_tilde_sq, abs=1e-9 * c * c * scale)
    if a.b_tilde_sq is not None and b.b_tilde_sq is not None and np.sum((gf + gc) ** 2) > 1e-6:
        assert b.b_tilde_sq == pytest.approx(a.b_tilde_sq, rel=1e-9)


def test_bgd_matches_closed_form():
    # G~^2 = w_f w_c |g_f/w_f - g_c/w_c|^2
    gen = np.random.default_rng(0)
    for _ in range(100):
        gf, gc = gen.normal(size=5), gen.normal(size=5)
        wf = gen.uniform(0.05, 0.95)
        wc = 1 - wf
        s = bgd_approx(gf, gc, wf, wc)
        assert s.g_tilde_sq == pytest.approx(wf * wc * np.sum((gf / wf - gc / wc) ** 2), rel=1e-10)


def test_max_bgd_window():
    one = [BgdSample(3.0, 1.5, 10)]
    assert max_bgd_over_window(one, 0, 100) == (3.0, 1.5)
    const = [BgdSample(2.0, 1.1, t) for t in range(5)]
    assert max_bgd_over_window(const, 0, 4) == (2.0, 1.1)
    mixed = [BgdSample(1.0, None, 1), BgdSample(5.0, 2.0, 2), BgdSample(9.0, 3.0, 50)]
    assert max_bgd_over_window(mixed, 0, 10) == (5.0, 2.0)
    assert max_bgd_over_window(mixed[:1], 0, 10) == (1.0, None)
    with pytest.raises(ValueError):
        max_bgd_over_window(mixed, 20, 30)


def test_step_size_ceiling_values():
    assert step_size_ceiling("pt", "convex", beta=1.0, B=1.0) == pytest.approx(1 / 12)
    assert step_size_ceiling("owgt", "convex", beta=2.0) == pytest.approx(1 / 16)
    assert step_size_ceiling("twgt", "strongly-convex", beta=1.0, mu=1.0) == pytest.approx(1 / 81)
    assert step_size_ceiling("owgt", "nonconvex", beta=1.0) == pytest.approx(1 / 18)
    assert step_size_ceiling("twgt", "nonconvex", beta=1.0) == pytest.approx(1 / 24)
    # mu dominates when the problem is very well conditioned
    assert step_size_ceiling("twgt", "strongly-convex", beta=1.0, mu=10.0) == pytest.approx(1 / 150)


@pytest.mark.parametrize("args", [
    ("fedavg", "convex", 1.0), ("pt", "concave", 1.0), ("pt", "convex", 0.0),
])
def test_step_size_ceiling_rejects(args):
    with pytest.raises(ValueError):
        step_size_ceiling(*args)


def test_step_size_ceiling_twgt_strongly_convex_needs_mu():
    with pytest.raises(ValueError):
        step_size_ceiling("twgt", "strongly-convex", 1.0, 0.0)


@given(st.floats(1.0, 100.0), st.floats(0.01, 10.0), st.floats(0.1, 100.0))
def test_ceiling_shape_in_B(b, db, beta):
    assert step_size_ceiling("pt", "convex", beta, B=b + db) < step_size_ceiling("pt", "convex", beta, B=b)
    for alg in ("owgt", "twgt"):
        assert step_size_ceiling(alg, "convex", beta, B=b) == step_size_ceiling(alg, "convex", beta, B=b + db)


def test_rounds_to_eps_examples():
    flat = [(t, 2.0) for t in range(5)]
    rep = convergence_report(flat, 2.0, 0.0)
    assert all(r == 0 for r in rep.rounds_to_eps.values())
    dec = [(t, 10.0 / (t + 1)) for t in range(1000)]
    rep = convergence_report(dec, 0.0, 1.0, eps_grid=(1.0, 0.1, 0.01))
    r = [rep.rounds_to_eps[e] for e in (1.0, 0.1, 0.01)]
    assert r == [9, 99, 999]
    assert rep.F0 == 10.0 and rep.D0_sq == 1.0
    assert rounds_to_eps(dec, 0.0, 1e-6) is None


@pytest.mark.parametrize("rho", [0.5, 0.9, 0.99])
def test_rounds_to_eps_geometric(rho):
    F0, f_star = 3.0, -1.0
    traj = [(t, f_star + F0 * rho**t) for t in range(5000)]
    for eps in (1e-2, 1e-4, 1e-6):
        closed = math.ceil(math.log(F0 / eps) / math.log(1 / rho))
        # direct scan oracle
        scan = next(t for t, f in traj if f - f_star <= eps)
        assert rounds_to_eps(traj, f_star, eps) == scan
        assert abs(scan - closed) <= 1


@settings(max_examples=50)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=50))
def test_rounds_to_eps_monotone_in_eps(vals):
    traj = list(enumerate(sorted(vals, reverse=True)))
    rep = convergence_report(traj, 0.0, 0.0, eps_grid=(10.0, 1.0, 0.1))
    got = [rep.rounds_to_eps[e] for e in (10.0, 1.0, 0.1)]
    got = [math.inf if g is None else g for g in got]
    assert got == sorted(got)
    assert rep.F0 >= 0


# ------------------------------------------------------------ costs

EMBEDDING_TASK = CostModel(n_items=3952, touched_items=160, embed_dim=16, bytes_per_element=4, client_batch=16)


def test_comm_overhead_reference_values():
    assert comm_overhead("baseline", EMBEDDING_TASK) == 505_856
    assert round(comm_overhead("baseline", EMBEDDING_TASK) / 1024) == 494
    assert comm_overhead("pt", EMBEDDING_TASK) == 20_480 == 20 * 1024
    assert comm_overhead("owgt", EMBEDDING_TASK) == comm_overhead("twgt", EMBEDDING_TASK) == 30_720 == 30 * 1024


def test_comm_overhead_empty_cache():
    c = CostModel(100, 0, 8)
    assert comm_overhead("pt", c) == comm_overhead("twgt", c) == 0


def test_client_compute_reference_values():
    assert comp_client_flops("pt", EMBEDDING_TASK) == 24_864
    assert round(comp_client_flops("pt", EMBEDDING_TASK) / 1e6, 3) == 0.025
    assert regularizer_flops_per_round("pt", EMBEDDING_TASK) == 124_946_432
    assert regularizer_flops_per_round("pt", EMBEDDING_TASK) == pytest.approx(125.16e6, rel=0.01)
    assert client_compute_savings(EMBEDDING_TASK) >= 0.9998


def test_cost_integer_arithmetic_spreadsheet():
    # independent recomputation of the baseline per-step formula
    N, d, B = 3952, 16, 16
    expected = B * d + 3 * B * d * d + 3 * B * B * d + 2 * B + N * N * d // 2 + N * d
    assert comp_client_flops("baseline", EMBEDDING_TASK) == expected
    assert isinstance(comp_client_flops("baseline", EMBEDDING_TASK), int)


def test_cost_model_validation():
    with pytest.raises(ValueError):
        CostModel(10, 11, 4)
    with pytest.raises(ValueError):
        comm_overhead("fedprox", EMBEDDING_TASK)


def test_steady_state_excess():
    losses = [10.0] * 80 + [1.5] * 20
    assert steady_state_excess(losses, 1.0) == pytest.approx(0.5)
