"""End-of-run contribution aggregation and budget-constrained payouts."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import MarketError

TERMS = ("P", "GS", "CEMD")

# The seven retained-term combinations used for ablation tables.
ABLATION_VARIANTS: tuple[tuple[str, ...], ...] = (
    ("P",),
    ("GS",),
    ("CEMD",),
    ("P", "GS"),
    ("P", "CEMD"),
    ("GS", "CEMD"),
    ("P", "GS", "CEMD"),
)


class BudgetWarning(UserWarning):
    pass


def data_share(sizes: Sequence[int]) -> list[float]:
    if len(sizes) == 0:
        raise MarketError("empty", "no client sizes")
    if any(s < 0 for s in sizes):
        raise MarketError("bad-sizes", "sizes must be non-negative")
    total = sum(sizes)
    if total <= 0:
        raise MarketError("zero-total", "total data size is zero")
    return [s / total for s in sizes]


def contribution_value(
    P: int,
    GS: float,
    C: float,
    EMD: float,
    q: float = 0.0,
    terms: Iterable[str] = TERMS,
) -> float:
    """Final contribution value CE of one seller.

    ``(1 + ln(P * e^GS) * (C + 1 - EMD)) * e^q`` with the log expanded to
    ``ln P + GS``. Never-selected sellers score 0 and the result is clamped
    at 0.

    ``terms`` keeps a subset of ``{"P", "GS", "CEMD"}``; a dropped term is
    replaced by its neutral value (P -> 1, GS -> 0, data bracket -> 1). When
    both P and GS are dropped the whole log factor is replaced by 1.
    """
    terms = set(terms)
    if terms - set(TERMS):
        raise MarketError("bad-terms", f"unknown terms {sorted(terms - set(TERMS))}")
    if P < 0:
        raise MarketError("bad-count", "participation count must be >= 0")
    if not 0.0 <= EMD <= 1.0:
        raise MarketError("bad-emd", f"EMD must lie in [0, 1], got {EMD}")
    if P == 0:
        return 0.0

    if "P" in terms or "GS" in terms:
        log_factor = (math.log(P) if "P" in terms else 0.0) + (GS if "GS" in terms else 0.0)
    else:
        log_factor = 1.0
    bracket = C + (1.0 - EMD) if "CEMD" in terms else 1.0
    return max(0.0, (1.0 + log_factor * bracket) * math.exp(q))


def compensate(ce: Sequence[float], budget: float) -> tuple[list[float], bool]:
    """Split ``budget`` in proportion to CE.

    Returns ``(payouts, degenerate)``; ``degenerate`` is True when every CE is
    zero, in which case nobody is paid and a :class:`BudgetWarning` is issued.
    """
    if budget < 0:
        raise MarketError("bad-budget", "budget must be >= 0")
    if any(v < 0 for v in ce):
        raise MarketError("bad-ce", "contribution values must be >= 0")
    total = math.fsum(ce)
    if total <= 0:
        warnings.warn("all contribution values are zero; budget left unallocated", BudgetWarning, stacklevel=2)
        return [0.0] * len(ce), True
    return [budget * v / total for v in ce], False


@dataclass
class ContributionLedger:
    P: list[int]
    GS: list[float]
    C: list[float]
    EMD: list[float]
    CE: list[float]
    CV: list[float]
    budget: float
    q: float
    unallocated: bool = False

    @property
    def n_clients(self) -> int:
        return len(self.P)


def settle(
    P: Sequence[int],
    GS: Sequence[float],
    sizes: Sequence[int],
    emds: Sequence[float],
    budget: float,
    q: float = 0.0,
    terms: Iterable[str] = TERMS,
) -> ContributionLedger:
    if not len(P) == len(GS) == len(sizes) == len(emds):
        raise MarketError("shape", "per-client inputs have different lengths")
    terms = tuple(terms)
    C = data_share(sizes)
    ce = [contribution_value(p, g, c, e, q, terms) for p, g, c, e in zip(P, GS, C, emds)]
    cv, flagged = compensate(ce, budget)
    return ContributionLedger(list(P), list(GS), C, list(emds), ce, cv, budget, q, flagged)
