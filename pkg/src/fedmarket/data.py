"""Synthetic tasks, seller partitions, label noise and label-distribution EMD."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import MarketError


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1 or self.features.shape[0] != self.labels.shape[0]:
            raise MarketError("shape", "features must be (n, F) and labels (n,)")
        if self.class_count < 1:
            raise MarketError("shape", "class_count must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise MarketError("shape", "labels outside [0, class_count)")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    def label_distribution(self) -> np.ndarray:
        if len(self) == 0:
            raise MarketError("empty-dataset", "no labels to summarise")
        counts = np.bincount(self.labels, minlength=self.class_count).astype(np.float64)
        return counts / counts.sum()

    def digest(self) -> str:
        """Content hash, used to show that strategy arms share one dataset."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        h.update(str(self.class_count).encode())
        return h.hexdigest()[:16]


def concat(parts: Sequence[Dataset]) -> Dataset:
    if not parts:
        raise MarketError("empty-dataset", "nothing to concatenate")
    return Dataset(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.labels for p in parts]),
        parts[0].class_count,
    )


@dataclass(eq=False)
class GlobalTask:
    """Agent-side view of a task: seller pool plus held-out splits."""

    train: Dataset
    validation: Dataset
    test: Dataset


def _class_centers(classes: int, features: int, separation: float, rng: np.random.Generator) -> np.ndarray:
    raw = rng.normal(size=(features, classes))
    if features >= classes:
        # orthonormal directions: every pair of centers is separation*sqrt(2) apart
        q, _ = np.linalg.qr(raw)
        directions = q[:, :classes].T
    else:
        directions = (raw / np.linalg.norm(raw, axis=0)).T
    return separation * directions


def _mixing(features: int, conditioning: float, rng: np.random.Generator) -> np.ndarray:
    """Random rotation with singular values log-spaced over [1/c, 1]."""
    q, _ = np.linalg.qr(rng.normal(size=(features, features)))
    return q * np.logspace(-np.log10(conditioning), 0.0, features)


def _draw(centers: np.ndarray, n: int, mixing: np.ndarray, rng: np.random.Generator) -> Dataset:
    classes, features = centers.shape
    labels = rng.permutation(np.arange(n) % classes)
    x = centers[labels] + rng.normal(size=(n, features))
    return Dataset(x @ mixing, labels, classes)


def synthesize_global(
    classes: int,
    features: int,
    samples: int,
    class_separation: float,
    seed: int,
    validation_samples: int | None = None,
    test_samples: int | None = None,
    conditioning: float = 1.0,
) -> GlobalTask:
    """Balanced Gaussian class clusters with unit within-class variance.

    Each class center sits at distance ``class_separation`` (in cluster
    sigmas) from the origin. Validation and test splits default to a
    quarter of ``samples`` each and are drawn from the same clusters.

    ``conditioning > 1`` pushes all points through one fixed linear map
    whose singular values span ``[1/conditioning, 1]``. Class separability
    (and so the best reachable accuracy) is unchanged, but gradient descent
    needs many more steps to get there.
    """
    if classes < 2 or features < 1:
        raise MarketError("degenerate", f"need classes >= 2 and features >= 1, got {classes}, {features}")
    if samples < classes:
        raise MarketError("degenerate", f"need samples >= classes, got {samples} < {classes}")
    if class_separation < 0:
        raise MarketError("degenerate", "class_separation must be >= 0")
    if conditioning < 1:
        raise MarketError("degenerate", "conditioning must be >= 1")
    validation_samples = max(classes, samples // 4) if validation_samples is None else validation_samples
    test_samples = max(classes, samples // 4) if test_samples is None else test_samples
    if validation_samples < 1 or test_samples < 1:
        raise MarketError("degenerate", "validation and test splits need at least one row")

    rng = np.random.default_rng(seed)
    centers = _class_centers(classes, features, class_separation, rng)
    mixing = _mixing(features, conditioning, rng) if conditioning > 1 else np.eye(features)
    return GlobalTask(
        train=_draw(centers, samples, mixing, rng),
        validation=_draw(centers, validation_samples, mixing, rng),
        test=_draw(centers, test_samples, mixing, rng),
    )


@dataclass
class PartitionSpec:
    """How the seller pool is split and degraded.

    ``alpha`` is None for IID; otherwise per-class client proportions are
    drawn from Dirichlet(alpha). ``quality`` holds per-client label-noise
    rates. ``sizes`` is either ``"equal"`` or explicit per-client counts
    (IID only).
    """

    n_clients: int
    alpha: float | None = None
    quality: list[float] = field(default_factory=list)
    sizes: str | list[int] = "equal"
    seed: int = 0
    min_size: int = 1

    def validate(self, total: int | None = None) -> None:
        if self.n_clients < 1:
            raise MarketError("bad-partition", "n_clients must be >= 1")
        if self.alpha is not None and not self.alpha > 0:
            raise MarketError("bad-partition", f"Dirichlet alpha must be > 0, got {self.alpha}")
        if self.quality and len(self.quality) != self.n_clients:
            raise MarketError("bad-partition", "quality must list one noise rate per client")
        if any(not 0.0 <= r <= 1.0 for r in self.quality):
            raise MarketError("bad-partition", "noise rates must lie in [0, 1]")
        if self.sizes != "equal":
            if self.alpha is not None:
                raise MarketError("bad-partition", "explicit sizes are only supported in IID mode")
            if len(self.sizes) != self.n_clients or any(s < 0 for s in self.sizes):
                raise MarketError("bad-partition", "sizes must list one non-negative count per client")
            if total is not None and sum(self.sizes) != total:
                raise MarketError("bad-partition", f"sizes sum to {sum(self.sizes)}, pool has {total}")


def partition(pool: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Assign every pool row to exactly one client. Label noise is not applied here."""
    spec.validate(len(pool))
    n = len(pool)
    if spec.n_clients > n:
        raise MarketError("too-many-clients", f"{spec.n_clients} clients for {n} samples")
    rng = np.random.default_rng(spec.seed)

    if spec.alpha is None:
        if spec.sizes == "equal":
            # stratified deal: shuffle, group by class, hand rows out round-robin
            order = rng.permutation(n)
            order = order[np.argsort(pool.labels[order], kind="stable")]
            chunks = [order[j :: spec.n_clients] for j in range(spec.n_clients)]
        else:
            chunks = np.split(rng.permutation(n), np.cumsum(spec.sizes)[:-1])
        return [pool.subset(np.sort(c)) for c in chunks]

    # Dirichlet label skew; redraw until every client reaches min_size
    for _ in range(1000):
        buckets: list[list[np.ndarray]] = [[] for _ in range(spec.n_clients)]
        for c in range(pool.class_count):
            idx = rng.permutation(np.flatnonzero(pool.labels == c))
            props = rng.dirichlet(np.full(spec.n_clients, spec.alpha))
            cuts = (np.cumsum(props) * len(idx)).astype(int)[:-1]
            for client, part in enumerate(np.split(idx, cuts)):
                buckets[client].append(part)
        chunks = [np.sort(np.concatenate(b)) for b in buckets]
        if min(len(c) for c in chunks) >= spec.min_size:
            return [pool.subset(c) for c in chunks]
    raise MarketError("bad-partition", f"could not give every client {spec.min_size} rows at alpha={spec.alpha}")


def corrupt_labels(data: Dataset, rate: float, seed: int) -> Dataset:
    """Replace exactly ``round(rate * n)`` labels with a uniformly drawn wrong class."""
    if not 0.0 <= rate <= 1.0:
        raise MarketError("bad-rate", f"noise rate must be in [0, 1], got {rate}")
    n = len(data)
    k = int(round(rate * n))
    labels = data.labels.copy()
    if k and data.class_count > 1:
        rng = np.random.default_rng(seed)
        rows = rng.choice(n, size=k, replace=False)
        # shift by 1..C-1 so the new label never equals the original
        labels[rows] = (labels[rows] + rng.integers(1, data.class_count, size=k)) % data.class_count
    return Dataset(data.features.copy(), labels, data.class_count)


def make_sellers(pool: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Partition, then apply each client's label-noise rate with its own seed."""
    parts = partition(pool, spec)
    if not spec.quality:
        return parts
    return [
        corrupt_labels(part, rate, seed=spec.seed * 100_003 + i + 1) if rate > 0 else part
        for i, (part, rate) in enumerate(zip(parts, spec.quality))
    ]


def emd(local: Sequence[float], global_: Sequence[float]) -> float:
    """Label-distribution distance in the bounded form 0.5 * L1 (total variation)."""
    p = np.asarray(local, dtype=np.float64)
    q = np.asarray(global_, dtype=np.float64)
    if p.shape != q.shape:
        raise MarketError("shape", f"distributions have {p.shape} and {q.shape} entries")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def read_csv_dataset(path: str | Path, class_count: int | None = None) -> Dataset:
    """Load ``feature_0,...,feature_{F-1},label`` rows.

    The first row is a header and its last column must be named ``label``.
    Lines starting with ``#`` are skipped.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise MarketError("bad-csv", f"{path} is empty")
    header, body = rows[0], rows[1:]
    if header[-1].strip() != "label":
        raise MarketError("bad-csv", f"{path}: last header column must be 'label'")
    if not body:
        raise MarketError("empty-dataset", f"{path} has a header but no rows")
    try:
        x = np.array([[float(v) for v in r[:-1]] for r in body])
        y = np.array([int(r[-1]) for r in body])
    except ValueError as exc:
        raise MarketError("bad-csv", f"{path}: {exc}") from exc
    return Dataset(x, y, class_count or int(y.max()) + 1)
