import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedmarket.contribution import (
    UtilityOracle,
    aggregation_weights,
    cosine,
    gamma_score,
    score_round,
    shapley_from_utilities,
    shapley_round,
    subset_utility,
    theta,
)
from fedmarket.data import synthesize_global
from fedmarket.errors import MarketError
from fedmarket.model import ModelParams, accuracy, gradient, init_params, local_train


def permutation_shapley(players, utility):
    """Average marginal contribution over all m! arrival orders."""
    totals = {p: 0.0 for p in players}
    orders = list(itertools.permutations(players))
    for order in orders:
        seen = frozenset()
        for p in order:
            totals[p] += utility(seen | {p}) - utility(seen)
            seen = seen | {p}
    return {p: v / len(orders) for p, v in totals.items()}


@pytest.fixture(scope="module")
def task():
    return synthesize_global(3, 5, 600, 1.5, seed=11)


@pytest.fixture(scope="module")
def uploads(task):
    """Five effective gradients from trained shards of the pool, two of them with flipped labels."""
    base = init_params((5, 3, 0))
    out = {}
    for c in range(5):
        shard = task.train.subset(np.arange(c, len(task.train), 5))
        if c >= 3:
            shard = type(shard)(shard.features, (shard.labels + 1) % 3, 3)
        out[c] = local_train(base, shard, epochs=3, lr=0.5)[1].values
    return base, out


def test_gamma_examples():
    g = np.array([1.0, 2.0, -1.0])
    others = [np.array([2.0, 4.0, -2.0]), np.array([0.0, 0.0, 0.0])]  # mean is parallel to g
    assert gamma_score(g, others) == pytest.approx(0.0, abs=1e-15)
    assert gamma_score(np.array([1.0, 0.0]), [np.array([0.0, 3.0])]) == pytest.approx(1.0)
    assert gamma_score(-g, [g, g]) == pytest.approx(2.0)


def test_gamma_zero_vector_convention():
    assert gamma_score(np.zeros(3), [np.ones(3)]) == 0.0
    assert gamma_score(np.ones(3), [np.ones(3), -np.ones(3)]) == 0.0
    assert cosine(np.zeros(2), np.zeros(2)) == 1.0


def test_gamma_errors():
    with pytest.raises(MarketError):
        gamma_score(np.ones(3), [np.ones(4)])
    with pytest.raises(MarketError):
        gamma_score(np.ones(3), [])


@settings(max_examples=100)
@given(
    a=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    b=st.lists(st.floats(-10, 10), min_size=4, max_size=4),
    s=st.floats(0.01, 100),
    t=st.floats(0.01, 100),
)
def test_gamma_is_bounded_and_scale_invariant(a, b, s, t):
    a, b = np.array(a), np.array(b)
    g = gamma_score(a, [b])
    assert 0.0 <= g <= 2.0
    assert gamma_score(s * a, [t * b]) == pytest.approx(g, abs=1e-9)


def test_theta_examples():
    assert theta(0.0, 0.7) == 0.0
    assert theta(1.0, 0.3) == 0.3
    assert theta(2.0, -0.1) == pytest.approx(-0.2)


def test_weight_examples():
    assert aggregation_weights([1, 1, 1, 1]) == [0.25] * 4
    assert aggregation_weights([2, -1, 2]) == [0.5, 0.0, 0.5]
    assert aggregation_weights([-1, -2]) == [0.5, 0.5]
    assert aggregation_weights([0.0, 0.0, 0.0]) == pytest.approx([1 / 3] * 3)


@settings(max_examples=100)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12))
def test_weights_are_a_probability_vector(thetas):
    w = aggregation_weights(thetas)
    assert all(x >= 0 for x in w)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-9)
    clamped = np.maximum(thetas, 0)
    if clamped.max() > 0:
        assert clamped[int(np.argmax(w))] == clamped.max()


def test_two_player_hand_example():
    table = {frozenset(): 0.5, frozenset({1}): 0.7, frozenset({2}): 0.6, frozenset({1, 2}): 0.8}
    phi = shapley_from_utilities([1, 2], table.__getitem__)
    # orderings (1,2): 1 adds 0.2, 2 adds 0.1; (2,1): 2 adds 0.1, 1 adds 0.2
    assert phi[1] == pytest.approx(0.2, abs=1e-12)
    assert phi[2] == pytest.approx(0.1, abs=1e-12)


@pytest.mark.parametrize("m", [1, 3, 5])
def test_kernel_matches_permutation_average(m):
    rng = np.random.default_rng(m)
    table = {}
    players = list(range(m))
    for r in range(m + 1):
        for combo in itertools.combinations(players, r):
            table[frozenset(combo)] = float(rng.random())
    assert shapley_from_utilities(players, table.__getitem__) == pytest.approx(
        permutation_shapley(players, table.__getitem__), abs=1e-12
    )


def test_enumeration_bound():
    with pytest.raises(MarketError) as e:
        shapley_from_utilities(list(range(13)), lambda s: 0.0)
    assert e.value.code == "too-many-clients"


def test_subset_utility_definitions(task, uploads):
    base, grads = uploads
    oracle = UtilityOracle(base, grads, 0.5, task.validation)
    assert subset_utility(oracle, ()) == accuracy(base, task.validation)
    stepped = ModelParams(base.values - 0.5 * grads[2], base.dims)
    assert subset_utility(oracle, {2}) == accuracy(stepped, task.validation)
    mean = (grads[0] + grads[1]) / 2
    assert subset_utility(oracle, {0, 1}) == accuracy(ModelParams(base.values - 0.5 * mean, base.dims), task.validation)


def test_true_validation_gradient_does_not_hurt(task):
    base = init_params((5, 3, 0))
    g = gradient(base, task.validation).values
    oracle = UtilityOracle(base, {"v": g}, 0.05, task.validation)
    assert oracle({"v"}) >= oracle(())


def test_efficiency_on_real_round(task, uploads):
    base, grads = uploads
    oracle = UtilityOracle(base, grads, 0.5, task.validation)
    phi = shapley_round(oracle, list(grads))
    assert abs(math.fsum(phi.values()) - (oracle(set(grads)) - oracle(()))) <= 1e-9
    assert phi == pytest.approx(permutation_shapley(list(grads), oracle), abs=1e-12)


def test_symmetric_clients_get_equal_values(task, uploads):
    base, grads = uploads
    twin = dict(grads)
    twin[9] = grads[1].copy()
    phi = shapley_round(UtilityOracle(base, twin, 0.5, task.validation), list(twin))
    assert abs(phi[1] - phi[9]) <= 1e-12


def test_dummy_clients_get_zero(task):
    base = init_params((5, 3, 0))
    zeros = {c: np.zeros(base.values.size) for c in range(4)}
    phi = shapley_round(UtilityOracle(base, zeros, 1.0, task.validation), list(zeros))
    assert all(v == 0.0 for v in phi.values())


def test_oracle_rejects_bad_gradients(task):
    with pytest.raises(MarketError):
        UtilityOracle(init_params((5, 3, 0)), {0: np.zeros(3)}, 1.0, task.validation)


def test_score_round_single_client(task, uploads):
    base, grads = uploads
    scores = score_round(base, {0: grads[0]}, 0.5, task.validation)
    assert scores.gamma == {0: 0.0}
    assert scores.weight == {0: 1.0}


def test_score_round_invariants(task, uploads):
    base, grads = uploads
    scores = score_round(base, grads, 0.5, task.validation)
    assert math.fsum(scores.weight.values()) == pytest.approx(1.0, abs=1e-9)
    assert all(0.0 <= g <= 2.0 for g in scores.gamma.values())
    for c in grads:
        assert scores.theta[c] == scores.gamma[c] * scores.shapley[c]
    clean = np.mean([scores.shapley[c] for c in (0, 1, 2)])
    flipped = np.mean([scores.shapley[c] for c in (3, 4)])
    assert clean > flipped
