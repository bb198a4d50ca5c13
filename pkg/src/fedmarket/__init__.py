"""Federated-learning data market simulator.

An agent recruits ``m`` of ``N`` sellers per round with a UCB bandit,
values their uploaded gradients (directional novelty times a
gradient-loading Shapley value), aggregates the global model with those
contribution weights and finally splits a fixed budget among the sellers.
"""

from .errors import MarketError
from .market import DataConfig, MarketConfig, MarketResult, RoundRecord, run

__all__ = ["DataConfig", "MarketConfig", "MarketError", "MarketResult", "RoundRecord", "run"]
__version__ = "0.1.0"
