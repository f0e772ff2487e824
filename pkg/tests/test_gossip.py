from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boundcon.gossip import (
    PAIRWISE, POLLING, GossipError, MonteCarloResult, PairwiseModel, PollingModel,
    expected_mean_path, expected_pairwise_blocks, expected_pairwise_matrix, expected_polling_matrix,
    contact_probabilities, monte_carlo_mean, pairwise_weight_matrix, resolvable_horizon, replication_rng, sample_pairwise_step, sample_path,
    sample_polling_step,
)
from boundcon.graph import line_graph
from boundcon.linalg import SingularMatrixError, StateVector, closed_form_limit, uniform_weights
from conftest import random_instance


# -- polling ----------------------------------------------------------------------

@pytest.fixture
def line3():
    return uniform_weights(line_graph(3), 0.0)


def test_polling_p0_is_identity(line3, rng):
    x = StateVector([0.0, 1.0], [9.0])
    assert sample_polling_step(PollingModel(line3, 0.0), x, rng).x_i.tolist() == [9.0]


def test_polling_p1_is_synchronous(rng):
    _, m = random_instance(3)
    x = StateVector(rng.normal(size=m.K), rng.normal(size=m.M))
    out = sample_polling_step(PollingModel(m, 1.0), x, rng)
    np.testing.assert_array_equal(out.x_i, m.p_e @ x.x_b + m.p_i @ x.x_i)


def test_polling_seeded_determinism():
    _, m = random_instance(1)
    x = StateVector(np.ones(m.K), np.zeros(m.M))
    model = PollingModel(m, 0.4)
    a = sample_polling_step(model, x, np.random.default_rng(5))
    b = sample_polling_step(model, x, np.random.default_rng(5))
    np.testing.assert_array_equal(a.x_i, b.x_i)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_polling_rejects_probability(line3, p):
    with pytest.raises(GossipError):
        PollingModel(line3, p)


def test_expected_polling_line3(line3):
    E = expected_polling_matrix(PollingModel(line3, 0.5))
    np.testing.assert_allclose(E.p_e, [[0.25, 0.25]])
    np.testing.assert_allclose(E.p_i, [[0.5]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_expected_polling_same_limit(seed, p):
    _, m = random_instance(seed)
    x_b = np.linspace(-1, 2, m.K)
    E = expected_polling_matrix(PollingModel(m, p))
    np.testing.assert_allclose(
        closed_form_limit(E, x_b).x_inf.x_i, closed_form_limit(m, x_b).x_inf.x_i, rtol=0, atol=1e-9
    )


# -- pairwise ---------------------------------------------------------------------

def test_weight_matrix_internal_pair():
    model = PairwiseModel.uniform(1, 3, 0.5)
    W = pairwise_weight_matrix(model, 2, 3)
    np.testing.assert_array_equal(W, [[1, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]])


def test_weight_matrix_boundary_pair():
    model = PairwiseModel.uniform(1, 3, 0.3)
    W = pairwise_weight_matrix(model, 1, 2)
    np.testing.assert_allclose(W[0], [1, 0, 0])
    np.testing.assert_allclose(W[1], [0.3, 0.7, 0])
    np.testing.assert_allclose(W[2], [0, 0, 1])


def test_weight_matrix_two_boundary_nodes():
    model = PairwiseModel.uniform(2, 3, 0.5)
    np.testing.assert_array_equal(pairwise_weight_matrix(model, 1, 2), np.eye(3))


def _brute_expected(model, clamp):
    """Average the explicit per-pair matrices (optionally without the reset)."""
    n, K = model.num_nodes, model.num_boundary
    E = np.zeros((n, n))
    for (i, j), pi, a in zip(model.pairs, model.probs, model.alphas):
        W = np.eye(n)
        for u, v in ((i, j), (j, i)):
            if clamp and u <= K:
                continue
            W[u - 1, u - 1] = 1 - a
            W[u - 1, v - 1] = a
        E += pi * W
    return E


def test_expected_pairwise_uniform3():
    model = PairwiseModel.uniform(1, 3, 0.5)
    E = expected_pairwise_blocks(model)
    # pairs {1,2},{1,3},{2,3} each 1/3: node 2 moves toward 1 or 3 with weight 1/6
    np.testing.assert_allclose(E.p_e, [[1 / 6], [1 / 6]], rtol=0, atol=1e-15)
    np.testing.assert_allclose(E.p_i, [[2 / 3, 1 / 6], [1 / 6, 2 / 3]], rtol=0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_expected_pairwise_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    K, M = int(rng.integers(1, 4)), int(rng.integers(1, 6))
    N = K + M
    pairs = np.array(list(combinations(range(1, N + 1), 2)))
    probs = rng.dirichlet(np.ones(len(pairs)))
    alphas = rng.uniform(0.05, 0.95, len(pairs))
    model = PairwiseModel(pairs, probs, alphas, K, N)
    for clamp in (True, False):
        np.testing.assert_allclose(expected_pairwise_matrix(model, clamp), _brute_expected(model, clamp), atol=1e-14)
    # without the reset every W_ij is symmetric, so the average is doubly stochastic
    U = expected_pairwise_matrix(model, clamp=False)
    np.testing.assert_allclose(U.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(U.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(expected_pairwise_matrix(model).sum(axis=1), 1.0, atol=1e-12)


def test_internal_only_distribution_rejected_then_singular():
    pairs, probs = [[2, 3]], [1.0]
    with pytest.raises(GossipError):
        PairwiseModel(pairs, probs, 0.5, 1, 3)
    model = PairwiseModel(pairs, probs, 0.5, 1, 3, require_boundary_pair=False)
    with pytest.raises(SingularMatrixError):
        closed_form_limit(expected_pairwise_blocks(model), [1.0])


@pytest.mark.parametrize(
    "kw",
    [
        dict(pairs=[[1, 2]], probs=[0.9], alphas=0.5),
        dict(pairs=[[1, 1]], probs=[1.0], alphas=0.5),
        dict(pairs=[[1, 2]], probs=[1.0], alphas=1.0),
        dict(pairs=[[1, 2], [2, 1]], probs=[0.5, 0.5], alphas=0.5),
        dict(pairs=[[1, 9]], probs=[1.0], alphas=0.5),
    ],
)
def test_pairwise_model_rejects(kw):
    with pytest.raises(GossipError):
        PairwiseModel(num_boundary=1, num_nodes=3, **kw)


def test_pairwise_step_envelope_and_sum(rng):
    model = PairwiseModel([[1, 2], [2, 3], [3, 4]], [0.2, 0.4, 0.4], 0.5, 1, 4)
    x = StateVector([0.0], [4.0, -2.0, 1.0])
    for _ in range(200):
        nxt = sample_pairwise_step(model, x, rng)
        assert nxt.full().min() >= x.full().min() - 1e-12
        assert nxt.full().max() <= x.full().max() + 1e-12
        assert nxt.x_b[0] == 0.0
        x = nxt
    model2 = PairwiseModel([[2, 3], [3, 4], [1, 2]], [0.5, 0.5, 0.0], 0.3, 1, 4, require_boundary_pair=False)
    # the boundary pair is never drawn, so the internal sum is conserved
    y = StateVector([10.0], [1.0, 2.0, 3.0])
    for _ in range(50):
        y = sample_pairwise_step(model2, y, rng)
    assert y.x_i.sum() == pytest.approx(6.0, abs=1e-12)


# -- Monte Carlo ------------------------------------------------------------------

@pytest.mark.parametrize("p", [0.2, 0.7])
def test_polling_mc_within_4se(p):
    m = uniform_weights(line_graph(6), 0.1)
    model = PollingModel(m, p)
    x0 = StateVector([0.0, 1.0], [3.0, -3.0, 2.0, -1.0])
    res = monte_carlo_mean(POLLING, model, x0, steps=8, reps=2000, seed=7)
    exp = expected_mean_path(POLLING, model, x0, res.record_steps)
    se = np.maximum(res.stderr, 1e-12)
    assert np.max(np.abs(res.mean - exp) / se) <= 4


def test_pairwise_mc_within_4se():
    model = PairwiseModel.uniform(2, 6, 0.5)
    x0 = StateVector([0.0, 1.0], [5.0, -5.0, 2.0, 0.0])
    res = monte_carlo_mean(PAIRWISE, model, x0, steps=60, reps=2000, seed=3, record_stride=10)
    exp = expected_mean_path(PAIRWISE, model, x0, res.record_steps)
    se = np.maximum(res.stderr, 1e-12)
    assert np.max(np.abs(res.mean - exp) / se) <= 4


def test_mc_zero_probability_has_zero_se():
    m = uniform_weights(line_graph(4))
    x0 = StateVector([0.0, 1.0], [0.3, 0.6])
    res = monte_carlo_mean(POLLING, PollingModel(m, 0.0), x0, steps=5, reps=10, seed=0)
    assert np.max(res.stderr) < 1e-15
    np.testing.assert_allclose(res.mean[-1], x0.full(), rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", [POLLING, PAIRWISE])
def test_sample_path_replays_batch(kind):
    g = line_graph(5)
    model = PollingModel(uniform_weights(g, 0.2), 0.5) if kind == POLLING else PairwiseModel.over_edges(g, 0.4)
    x0 = StateVector([0.0, 1.0], [2.0, 0.5, -1.0])
    steps = 300  # spans more than one draw chunk
    res = monte_carlo_mean(kind, model, x0, steps, reps=4, seed=11, record_stride=steps)
    paths = [sample_path(kind, model, x0, steps, 11, r)[1][-1] for r in range(4)]
    np.testing.assert_allclose(res.mean[-1], np.mean(paths, axis=0), rtol=0, atol=1e-14)


def test_sample_path_matches_single_steps():
    g = line_graph(5)
    x0 = StateVector([0.0, 1.0], [2.0, 0.5, -1.0])
    for kind, model, stepper in (
        (POLLING, PollingModel(uniform_weights(g, 0.2), 0.5), sample_polling_step),
        (PAIRWISE, PairwiseModel.over_edges(g, 0.4), sample_pairwise_step),
    ):
        _, states = sample_path(kind, model, x0, 40, seed=2, rep=3)
        rng, x = replication_rng(2, 3), x0
        for t in range(1, 41):
            x = stepper(model, x, rng)
            np.testing.assert_allclose(states[t], x.full(), rtol=0, atol=1e-14)


def test_mc_reproducible_and_roundtrip(tmp_path):
    model = PairwiseModel.uniform(1, 4, 0.5)
    x0 = StateVector([1.0], [0.0, 0.0, 0.0])
    a = monte_carlo_mean(PAIRWISE, model, x0, 30, 50, seed=9, record_stride=7)
    b = monte_carlo_mean(PAIRWISE, model, x0, 30, 50, seed=9, record_stride=7)
    np.testing.assert_array_equal(a.mean, b.mean)
    assert a.record_steps.tolist() == [0, 7, 14, 21, 28, 30]
    a.save(tmp_path / "mc.json")
    back = MonteCarloResult.load(tmp_path / "mc.json")
    np.testing.assert_array_equal(back.mean, a.mean)
    np.testing.assert_array_equal(back.stderr, a.stderr)
    assert (back.model, back.steps, back.reps, back.seed) == ("pairwise", 30, 50, 9)


def test_mc_argument_checks():
    model = PairwiseModel.uniform(1, 3, 0.5)
    x0 = StateVector([1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        monte_carlo_mean(PAIRWISE, model, x0, 5, 1, 0)
    with pytest.raises(GossipError):
        monte_carlo_mean("push", model, x0, 5, 4, 0)


def test_contact_probabilities():
    m = uniform_weights(line_graph(5))
    np.testing.assert_array_equal(contact_probabilities(POLLING, PollingModel(m, 0.3)), [0.3, 0.3, 0.3])
    model = PairwiseModel([[1, 3], [3, 4], [4, 5]], [0.5, 0.25, 0.25], 0.5, 2, 5, require_boundary_pair=True)
    np.testing.assert_allclose(contact_probabilities(PAIRWISE, model), [0.75, 0.5, 0.25])


@pytest.mark.parametrize("p,expected", [(0.1, 37), (0.2, 17), (0.5, 5), (0.8, 2), (1.0, 1)])
def test_resolvable_horizon_polling(p, expected):
    model = PollingModel(uniform_weights(line_graph(4)), p)
    k = resolvable_horizon(POLLING, model, 1000)
    assert k == expected
    # at k at least 20 of 1000 paths are expected to leave a node untouched
    if p < 1:
        assert 1000 * (1 - p) ** k >= 20 > 1000 * (1 - p) ** (k + 1)


def test_resolvable_horizon_rejects():
    model = PollingModel(uniform_weights(line_graph(4)), 0.0)
    with pytest.raises(GossipError):
        resolvable_horizon(POLLING, model, 1000)
    with pytest.raises(ValueError):
        resolvable_horizon(POLLING, PollingModel(model.base, 0.5), 10)
