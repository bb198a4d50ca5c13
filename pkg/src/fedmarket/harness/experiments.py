"""Studies built from several market runs over one shared data draw."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from ..data import emd
from ..errors import MarketError
from ..market import MarketConfig, MarketResult, run
from ..settlement import ABLATION_VARIANTS, ContributionLedger, settle


def partition_hash(result: MarketResult) -> str:
    h = hashlib.sha256()
    for seller in result.sellers:
        h.update(seller.digest().encode())
    return h.hexdigest()[:16]


def client_emds(result: MarketResult) -> list[float]:
    target = result.task.train.label_distribution()
    return [emd(s.label_distribution(), target) for s in result.sellers]


def ledger_for(result: MarketResult, config: MarketConfig, terms=("P", "GS", "CEMD")) -> ContributionLedger:
    sizes = [len(s) for s in result.sellers]
    return settle(result.P, result.GS, sizes, client_emds(result), config.budget, q=config.q, terms=terms)


@dataclass
class Comparison:
    results: dict[str, MarketResult]
    partition: str

    def final_test_accuracy(self) -> dict[str, float]:
        return {s: r.final_test_accuracy for s, r in self.results.items()}


def compare_strategies(config: MarketConfig, strategies) -> Comparison:
    """Run each strategy on the same task and the same sellers."""
    if not strategies:
        raise MarketError("bad-config", "no strategies to compare")
    results: dict[str, MarketResult] = {}
    task = sellers = None
    for name in strategies:
        r = run(dataclasses.replace(config, strategy=name), task=task, sellers=sellers)
        task, sellers = r.task, r.sellers
        results[name] = r
    hashes = {partition_hash(r) for r in results.values()}
    assert len(hashes) == 1
    return Comparison(results, hashes.pop())


def subset_config(config: MarketConfig, ids) -> MarketConfig:
    rates = config.data.noise_rates(config.n_clients)
    data = dataclasses.replace(config.data, label_noise=[rates[i] for i in ids])
    return dataclasses.replace(config, n_clients=len(ids), data=data)


@dataclass
class RemovalStudy:
    contribution: MarketResult
    kept: dict[str, list[int]]
    runs: dict[str, MarketResult]

    def final_test_accuracy(self) -> dict[str, float]:
        return {g: r.final_test_accuracy for g, r in self.runs.items()}


def removal_study(config: MarketConfig, keep: int = 10, groups=("top", "bottom", "all")) -> RemovalStudy:
    """Rank sellers by accumulated contribution, then retrain on the best, worst or all of them.

    ``all`` reuses the contribution run itself, since retraining on every
    seller with the same config reproduces it exactly.
    """
    if not 0 < keep <= config.n_clients:
        raise MarketError("bad-config", f"keep={keep} outside 1..{config.n_clients}")
    if keep < config.m:
        raise MarketError("bad-config", f"keep={keep} is smaller than m={config.m}")
    base = run(config)
    order = np.argsort(-np.asarray(base.GS), kind="stable")
    kept: dict[str, list[int]] = {}
    runs: dict[str, MarketResult] = {}
    for group in groups:
        if group == "all":
            kept[group] = list(range(config.n_clients))
            runs[group] = base
            continue
        if group == "top":
            ids = sorted(order[:keep].tolist())
        elif group == "bottom":
            ids = sorted(order[-keep:].tolist())
        else:
            raise MarketError("bad-config", f"unknown group {group!r}; use top, bottom or all")
        kept[group] = ids
        runs[group] = run(subset_config(config, ids), task=base.task, sellers=[base.sellers[i] for i in ids])
    return RemovalStudy(base, kept, runs)


def variant_name(terms) -> str:
    return "+".join(terms)


def ablation(config: MarketConfig, strategies) -> dict[str, dict[str, ContributionLedger]]:
    """Settlement under every subset of CE terms, per strategy."""
    comparison = compare_strategies(config, strategies)
    return {
        name: {variant_name(v): ledger_for(r, config, terms=v) for v in ABLATION_VARIANTS}
        for name, r in comparison.results.items()
    }
