"""The agent's round loop: select, train, score, aggregate, reward, update."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import bandit
from .contribution import score_round
from .data import Dataset, GlobalTask, PartitionSpec, make_sellers, read_csv_dataset, synthesize_global
from .errors import MarketError
from .model import ModelParams, accuracy, init_params, local_train

logger = logging.getLogger(__name__)


@dataclass
class DataConfig:
    classes: int = 10
    features: int = 20
    samples: int = 4000
    validation_samples: int | None = None
    test_samples: int | None = None
    class_separation: float = 3.0
    conditioning: float = 1.0
    alpha: float | None = None  # None -> IID, else Dirichlet(alpha)
    label_noise: float | list[float] = 0.0
    sizes: str | list[int] = "equal"
    seed: int = 0
    csv_path: str | None = None  # optional real dataset; validation/test carved from it

    def noise_rates(self, n_clients: int) -> list[float]:
        if isinstance(self.label_noise, (int, float)):
            return [float(self.label_noise)] * n_clients
        rates = [float(r) for r in self.label_noise]
        if len(rates) != n_clients:
            raise MarketError("bad-config", f"label_noise lists {len(rates)} rates for {n_clients} clients")
        return rates


@dataclass
class MarketConfig:
    n_clients: int = 20
    m: int = 5
    rounds: int = 100
    eta: float = 1.0
    strategy: str = "ucb"
    k: float = 1.0
    q: float = 0.0
    budget: float = 100.0
    seed: int = 0
    hidden: int = 0
    local_epochs: int = 5
    local_lr: float = 0.1
    batch_size: int | None = None
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self) -> None:
        def bad(msg: str) -> MarketError:
            return MarketError("bad-config", msg)

        if self.n_clients < 1:
            raise bad("n_clients must be >= 1")
        if not 1 <= self.m <= self.n_clients:
            raise bad(f"need 1 <= m <= N, got m={self.m}, N={self.n_clients}")
        if self.rounds < 1:
            raise bad(f"rounds must be >= 1, got {self.rounds}")
        if not self.eta > 0:
            raise bad("eta must be > 0")
        if not self.k > 0:
            raise bad("k must be > 0")
        if self.budget < 0:
            raise bad("budget must be >= 0")
        if self.local_epochs < 1 or not self.local_lr > 0:
            raise bad("local_epochs must be >= 1 and local_lr > 0")
        if self.hidden < 0:
            raise bad("hidden must be >= 0")
        try:
            bandit.StrategyKind(self.strategy)
        except ValueError:
            raise bad(f"unknown strategy {self.strategy!r}") from None
        self.data.noise_rates(self.n_clients)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RoundRecord:
    t: int
    selected: list[int]
    gamma: dict[int, float]
    shapley: dict[int, float]
    theta: dict[int, float]
    weight: dict[int, float]
    reward: dict[int, int]
    utility_empty: float
    utility_full: float
    train_acc: float
    val_acc: float
    test_acc: float


@dataclass
class MarketResult:
    params: ModelParams
    records: list[RoundRecord]
    state: bandit.BanditState
    P: list[int]
    GS: list[float]
    sellers: list[Dataset]
    task: GlobalTask

    @property
    def final_test_accuracy(self) -> float:
        return self.records[-1].test_acc


def build_task(data: DataConfig) -> GlobalTask:
    if data.csv_path is None:
        return synthesize_global(
            data.classes,
            data.features,
            data.samples,
            data.class_separation,
            data.seed,
            data.validation_samples,
            data.test_samples,
            data.conditioning,
        )
    full = read_csv_dataset(data.csv_path)
    order = np.random.default_rng(data.seed).permutation(len(full))
    n_val = data.validation_samples or len(full) // 5
    n_test = data.test_samples or len(full) // 5
    if n_val + n_test >= len(full):
        raise MarketError("bad-config", "csv dataset too small for the requested splits")
    return GlobalTask(
        train=full.subset(np.sort(order[n_val + n_test :])),
        validation=full.subset(np.sort(order[:n_val])),
        test=full.subset(np.sort(order[n_val : n_val + n_test])),
    )


def build_sellers(config: MarketConfig, task: GlobalTask) -> list[Dataset]:
    spec = PartitionSpec(
        n_clients=config.n_clients,
        alpha=config.data.alpha,
        quality=config.data.noise_rates(config.n_clients),
        sizes=config.data.sizes,
        seed=config.data.seed,
    )
    return make_sellers(task.train, spec)


def global_step(w: ModelParams, gradients: Sequence, weights: Sequence[float], eta: float) -> ModelParams:
    """``w - eta * sum_i weights[i] * gradients[i]``, summed in list order."""
    if len(gradients) != len(weights):
        raise MarketError("shape", f"{len(gradients)} gradients but {len(weights)} weights")
    step = np.zeros_like(w.values)
    for g, p in zip(gradients, weights):
        g = np.asarray(getattr(g, "values", g), dtype=np.float64)
        if g.shape != step.shape:
            raise MarketError("shape", "gradient length does not match the model")
        step += p * g
    return ModelParams(w.values - eta * step, w.dims)


def accumulate(P: Sequence[int], GS: Sequence[float], record: RoundRecord) -> tuple[list[int], list[float]]:
    P, GS = list(P), list(GS)
    for c in record.selected:
        P[c] += 1
        GS[c] += record.theta[c]
    return P, GS


def _train_seed(seed: int, t: int, client: int) -> int:
    return int(np.random.SeedSequence([seed, t, client]).generate_state(1)[0])


def run(
    config: MarketConfig,
    task: GlobalTask | None = None,
    sellers: list[Dataset] | None = None,
) -> MarketResult:
    """Run ``config.rounds`` market rounds.

    ``task`` and ``sellers`` may be supplied to reuse data across runs (for
    example when retraining on a subset of sellers); otherwise both are
    generated from ``config.data``.
    """
    config.validate()
    task = task if task is not None else build_task(config.data)
    sellers = sellers if sellers is not None else build_sellers(config, task)
    if len(sellers) != config.n_clients:
        raise MarketError("bad-config", f"{len(sellers)} sellers for n_clients={config.n_clients}")

    dims = (task.train.features.shape[1], task.train.class_count, config.hidden)
    w = init_params(dims, seed=config.seed)
    strategy = bandit.Strategy(bandit.StrategyKind(config.strategy), config.m, config.k)
    state = bandit.BanditState.fresh(config.n_clients, seed=config.seed)
    P = [0] * config.n_clients
    GS = [0.0] * config.n_clients
    records: list[RoundRecord] = []

    for t in range(config.rounds):
        try:
            selected = bandit.select(state, strategy, t)
            uploads: dict[int, np.ndarray] = {}
            for c in selected:
                _, g = local_train(
                    w,
                    sellers[c],
                    epochs=config.local_epochs,
                    lr=config.local_lr,
                    seed=_train_seed(config.seed, t, c),
                    batch_size=config.batch_size,
                )
                uploads[c] = g.values

            scores = score_round(w, uploads, config.eta, task.validation)
            w = global_step(w, [uploads[c] for c in selected], [scores.weight[c] for c in selected], config.eta)
            phis = [scores.shapley[c] for c in selected]
            rewards = {c: bandit.reward(scores.gamma[c], scores.shapley[c], phis, config.k) for c in selected}
            state = bandit.update(state, selected, rewards)

            record = RoundRecord(
                t=t,
                selected=list(selected),
                gamma=scores.gamma,
                shapley=scores.shapley,
                theta=scores.theta,
                weight=scores.weight,
                reward=rewards,
                utility_empty=scores.utility_empty,
                utility_full=scores.utility_full,
                train_acc=accuracy(w, task.train),
                val_acc=accuracy(w, task.validation),
                test_acc=accuracy(w, task.test),
            )
        except MarketError as exc:
            raise MarketError(exc.code, str(exc), round_index=t) from exc
        P, GS = accumulate(P, GS, record)
        records.append(record)
        logger.debug("round %d selected=%s val_acc=%.4f", t, selected, record.val_acc)

    return MarketResult(w, records, state, P, GS, sellers, task)

