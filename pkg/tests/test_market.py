import dataclasses
import math

import numpy as np
import pytest

from fedmarket import DataConfig, MarketConfig, MarketError, run
from fedmarket.market import RoundRecord, accumulate, build_sellers, build_task, global_step
from fedmarket.model import ModelParams


def small(**kw) -> MarketConfig:
    data = DataConfig(classes=3, features=5, samples=400, seed=kw.pop("data_seed", 1), **kw.pop("data", {}))
    return MarketConfig(n_clients=6, m=3, rounds=8, data=data, **kw)


@pytest.fixture(scope="module")
def result():
    return run(small(seed=4))


@pytest.mark.parametrize(
    "change",
    [dict(rounds=0), dict(m=0), dict(m=7), dict(eta=0.0), dict(strategy="oracle"), dict(local_lr=-1.0)],
)
def test_invalid_configs_rejected(change):
    with pytest.raises(MarketError) as e:
        run(dataclasses.replace(small(), **change))
    assert e.value.code == "bad-config"


def test_noise_list_must_match_clients():
    with pytest.raises(MarketError):
        small(data=dict(label_noise=[0.1, 0.2])).validate()


def test_global_step_examples():
    w = ModelParams(np.array([1.0, 1.0]), (1, 1, 0))
    out = global_step(w, [np.array([1.0, 0.0]), np.array([0.0, 1.0])], [0.5, 0.5], 1.0)
    assert out.values.tolist() == [0.5, 0.5]
    out = global_step(w, [np.array([2.0, 2.0])], [1.0], 0.25)
    assert out.values.tolist() == [0.5, 0.5]
    with pytest.raises(MarketError):
        global_step(w, [np.ones(2)], [0.5, 0.5], 1.0)


def test_accumulate_example():
    rec = RoundRecord(0, [0, 2], {}, {}, {0: 0.1, 2: -0.3}, {}, {}, 0.0, 0.0, 0.0, 0.0, 0.0)
    P, GS = accumulate([1, 0, 4], [0.5, 0.0, 1.0], rec)
    assert P == [2, 0, 5]
    assert GS == [0.6, 0.0, 0.7]


def test_participation_matches_bandit_counts(result):
    assert result.P == result.state.counts.tolist()
    assert sum(result.P) == 3 * 8


def test_round_records_are_consistent(result):
    for rec in result.records:
        assert rec.selected == sorted(rec.selected) and len(rec.selected) == 3
        assert set(rec.gamma) == set(rec.shapley) == set(rec.weight) == set(rec.reward) == set(rec.selected)
        assert math.fsum(rec.weight.values()) == pytest.approx(1.0, abs=1e-9)
        for c in rec.selected:
            assert rec.theta[c] == rec.gamma[c] * rec.shapley[c]
            assert rec.reward[c] in (0, 1)
        for acc in (rec.train_acc, rec.val_acc, rec.test_acc):
            assert 0.0 <= acc <= 1.0


def test_gs_replays_from_records(result):
    P, GS = [0] * 6, [0.0] * 6
    for rec in result.records:
        P, GS = accumulate(P, GS, rec)
    assert P == result.P and GS == result.GS


def test_same_seed_same_run(result):
    again = run(small(seed=4))
    assert np.array_equal(again.params.values, result.params.values)
    assert again.GS == result.GS


def test_different_seed_changes_run(result):
    assert run(small(seed=5)).GS != result.GS


def test_single_client_team():
    r = run(dataclasses.replace(small(), m=1, rounds=10))
    for rec in r.records:
        (c,) = rec.selected
        assert rec.gamma[c] == 0.0 and rec.theta[c] == 0.0 and rec.weight[c] == 1.0


def test_supplied_data_is_used_as_is():
    config = small()
    task = build_task(config.data)
    sellers = build_sellers(config, task)
    r = run(config, task=task, sellers=sellers)
    assert r.sellers is sellers and r.task is task
    with pytest.raises(MarketError):
        run(config, task=task, sellers=sellers[:-1])


def test_noisy_sellers_carry_flipped_labels():
    config = small(data=dict(label_noise=[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]))
    task = build_task(config.data)
    sellers = build_sellers(config, task)
    clean = build_sellers(small(), task)
    for s, c in zip(sellers[3:], clean[3:]):
        assert np.array_equal(s.features, c.features)
        assert np.all(s.labels != c.labels)


def test_mlp_market_runs():
    r = run(dataclasses.replace(small(), hidden=4, rounds=4))
    assert np.all(np.isfinite(r.params.values))
