"""Seller selection: UCB and the Random, Greedy and Worst baselines."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import MarketError


class StrategyKind(str, enum.Enum):
    UCB = "ucb"
    RANDOM = "random"
    GREEDY = "greedy"
    WORST = "worst"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    m: int
    k: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.m < 1:
            raise MarketError("bad-config", f"team size m must be >= 1, got {self.m}")
        if not self.k > 0:
            raise MarketError("bad-config", f"reward threshold k must be > 0, got {self.k}")


@dataclass
class BanditState:
    """Per-client pull counts and reward totals; ``n`` counts completed rounds."""

    counts: np.ndarray
    reward_sum: np.ndarray
    n: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    @classmethod
    def fresh(cls, n_clients: int, seed: int = 0) -> "BanditState":
        return cls(
            np.zeros(n_clients, dtype=np.int64),
            np.zeros(n_clients, dtype=np.int64),
            0,
            np.random.default_rng(seed),
        )

    @property
    def n_clients(self) -> int:
        return int(self.counts.shape[0])

    def reward_rate(self) -> np.ndarray:
        """Empirical reward rate; 0 for clients never selected."""
        out = np.zeros(self.n_clients)
        seen = self.counts > 0
        out[seen] = self.reward_sum[seen] / self.counts[seen]
        return out


def reward(gamma: float, shapley_i: float, shapley_all: Sequence[float], k: float = 1.0) -> int:
    """1 iff the client is aligned (gamma < k), valuable (phi > 0) and above the round mean."""
    if len(shapley_all) == 0:
        raise MarketError("empty", "reward needs the round's Shapley values")
    mean = math.fsum(shapley_all) / len(shapley_all)
    return int(gamma < k and shapley_i > 0 and shapley_i > mean)


def ucb_priority(state: BanditState, client: int) -> float:
    n_i = int(state.counts[client])
    if n_i == 0:
        return math.inf
    if state.n < 1:
        raise MarketError("bad-state", "UCB priority needs at least one completed round")
    return state.reward_sum[client] / n_i + math.sqrt(2.0 * math.log(state.n) / n_i)


def priorities(state: BanditState) -> np.ndarray:
    return np.array([ucb_priority(state, c) for c in range(state.n_clients)])


def warmup_rounds(n_clients: int, m: int) -> int:
    return -(-n_clients // m)


def _top(scores: np.ndarray, m: int, rng: np.random.Generator) -> list[int]:
    # random secondary key breaks ties uniformly
    tiebreak = rng.random(scores.shape[0])
    order = np.lexsort((tiebreak, -scores))
    return sorted(int(c) for c in order[:m])


def select(state: BanditState, strategy: Strategy, t: int) -> list[int]:
    """Client ids (sorted) chosen for round ``t``.

    The first ``ceil(N/m)`` rounds are a round-robin cover shared by every
    strategy; the last cover round wraps around to client 0 when m does
    not divide N.
    """
    n_clients, m = state.n_clients, strategy.m
    if m > n_clients:
        raise MarketError("bad-config", f"m={m} exceeds N={n_clients}")
    if t < warmup_rounds(n_clients, m):
        return sorted({(t * m + j) % n_clients for j in range(m)})

    kind = strategy.kind
    if kind is StrategyKind.RANDOM:
        return sorted(int(c) for c in state.rng.choice(n_clients, size=m, replace=False))
    if kind is StrategyKind.GREEDY:
        return _top(state.counts.astype(np.float64), m, state.rng)
    prio = priorities(state)
    if kind is StrategyKind.UCB:
        return _top(prio, m, state.rng)
    if kind is StrategyKind.WORST:
        return _top(-prio, m, state.rng)
    raise MarketError("bad-config", f"unknown strategy {kind!r}")


def update(state: BanditState, selected: Sequence[int], rewards: Mapping[int, int]) -> BanditState:
    """Record one completed round. Returns a new state sharing the RNG stream."""
    if set(rewards) != set(selected) or len(set(selected)) != len(selected):
        raise MarketError("key-mismatch", "rewards must be keyed exactly by the selected clients")
    counts = state.counts.copy()
    sums = state.reward_sum.copy()
    for c in selected:
        r = int(rewards[c])
        if r not in (0, 1):
            raise MarketError("bad-reward", f"reward must be 0 or 1, got {r}")
        counts[c] += 1
        sums[c] += r
    return BanditState(counts, sums, state.n + 1, state.rng)
