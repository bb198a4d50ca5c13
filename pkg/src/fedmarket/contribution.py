"""Per-round valuation of the selected sellers.

Each round the agent keeps the effective gradient uploaded by every
selected seller. A coalition's model is formed by *loading* the mean of its
members' gradients onto the broadcast weights, so valuing all 2^m
coalitions costs 2^m accuracy evaluations and no retraining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .data import Dataset
from .errors import MarketError
from .model import ModelParams, accuracy

MAX_EXACT_PLAYERS = 12


def _as_array(g) -> np.ndarray:
    return np.asarray(getattr(g, "values", g), dtype=np.float64)


def cosine(a, b) -> float:
    """Cosine similarity; 1.0 when either vector is zero."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise MarketError("shape", f"gradient lengths differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def gamma_score(g_i, others: Sequence) -> float:
    """Directional novelty ``1 - cos(g_i, mean(others))``, in [0, 2]."""
    if len(others) == 0:
        raise MarketError("empty", "gamma needs at least one other gradient")
    mean = np.mean([_as_array(o) for o in others], axis=0)
    return 1.0 - cosine(g_i, mean)


def theta(gamma: float, shapley: float) -> float:
    return gamma * shapley


def aggregation_weights(thetas: Sequence[float]) -> list[float]:
    """Normalise clamped scores; uniform if nothing is positive."""
    if len(thetas) == 0:
        raise MarketError("empty", "no scores to normalise")
    clamped = np.maximum(np.asarray(thetas, dtype=np.float64), 0.0)
    total = clamped.sum()
    if total <= 0.0:
        return [1.0 / len(clamped)] * len(clamped)
    return (clamped / total).tolist()


@dataclass
class UtilityOracle:
    """Validation accuracy of ``base - eta * mean(gradients of S)``.

    Results are memoised per coalition, so each subset is evaluated once.
    """

    base: ModelParams
    gradients: dict[Hashable, np.ndarray]
    eta: float
    validation: Dataset
    _cache: dict[frozenset, float] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.gradients = {k: _as_array(v) for k, v in self.gradients.items()}
        for k, g in self.gradients.items():
            if g.shape != self.base.values.shape:
                raise MarketError("shape", f"gradient of client {k!r} does not match the model")

    def __call__(self, coalition) -> float:
        key = frozenset(coalition)
        if key not in self._cache:
            if key - self.gradients.keys():
                raise MarketError("unknown-client", f"{sorted(key - self.gradients.keys())} not in oracle")
            if key:
                # fixed member order keeps the float sum reproducible
                step = np.mean([self.gradients[c] for c in self._ordered(key)], axis=0)
                params = ModelParams(self.base.values - self.eta * step, self.base.dims)
            else:
                params = self.base
            self._cache[key] = accuracy(params, self.validation)
        return self._cache[key]

    def _ordered(self, key: frozenset) -> list:
        return [c for c in self.gradients if c in key]


def subset_utility(oracle: UtilityOracle, coalition) -> float:
    return oracle(coalition)


def shapley_from_utilities(players: Sequence[Hashable], utility) -> dict[Hashable, float]:
    """Exact Shapley values of ``utility`` (a callable on frozensets) by full enumeration."""
    m = len(players)
    if m > MAX_EXACT_PLAYERS:
        raise MarketError("too-many-clients", f"{m} players exceeds exact bound {MAX_EXACT_PLAYERS}")
    if len(set(players)) != m:
        raise MarketError("duplicate-client", "players must be distinct")
    values = [utility(frozenset(p for b, p in enumerate(players) if mask >> b & 1)) for mask in range(1 << m)]
    weight = [math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)]
    phi: dict[Hashable, float] = {}
    for i, player in enumerate(players):
        bit = 1 << i
        total = 0.0
        for mask in range(1 << m):
            if mask & bit:
                continue
            total += weight[mask.bit_count()] * (values[mask | bit] - values[mask])
        phi[player] = total
    return phi


def shapley_round(oracle: UtilityOracle, selected: Sequence[Hashable]) -> dict[Hashable, float]:
    return shapley_from_utilities(list(selected), oracle)


@dataclass
class RoundScores:
    gamma: dict[Hashable, float]
    shapley: dict[Hashable, float]
    theta: dict[Hashable, float]
    weight: dict[Hashable, float]
    utility_empty: float
    utility_full: float


def score_round(
    base: ModelParams,
    gradients: dict[Hashable, np.ndarray],
    eta: float,
    validation: Dataset,
) -> RoundScores:
    """Gamma, Shapley, theta and aggregation weight for one round's uploads.

    With a single upload there is no leave-one-out aggregate, so gamma is 0
    and the lone client takes the whole weight.
    """
    ids = list(gradients)
    arrays = [_as_array(gradients[c]) for c in ids]
    if len(ids) == 1:
        gammas = {ids[0]: 0.0}
    else:
        gammas = {c: gamma_score(arrays[j], arrays[:j] + arrays[j + 1 :]) for j, c in enumerate(ids)}
    oracle = UtilityOracle(base, dict(zip(ids, arrays)), eta, validation)
    phi = shapley_round(oracle, ids)
    thetas = {c: theta(gammas[c], phi[c]) for c in ids}
    weights = dict(zip(ids, aggregation_weights([thetas[c] for c in ids])))
    return RoundScores(gammas, phi, thetas, weights, oracle(()), oracle(ids))
