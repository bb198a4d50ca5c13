"""JSON config files and the named experiment presets."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import MarketError
from ..market import DataConfig, MarketConfig

SCHEMA_VERSION = 1

PRESET_NAMES = ("selection-dist", "remove-clients", "participation-profile", "strategy-compare", "ce-ablation")


@dataclass
class ExperimentSettings:
    """Knobs that belong to a study rather than to a single market run."""

    strategies: list[str] = field(default_factory=lambda: ["ucb", "random", "greedy", "worst"])
    keep: int = 10
    groups: list[str] = field(default_factory=lambda: ["top", "bottom", "all"])


@dataclass
class ExperimentPreset:
    name: str
    market: MarketConfig
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise MarketError("bad-config", f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise MarketError("bad-config", f"unknown key(s) in {where}: {', '.join(unknown)}")
    return cls(**raw)


def market_from_dict(raw: dict) -> MarketConfig:
    raw = dict(raw)
    data = _build(DataConfig, raw.pop("data", {}), "data")
    config = _build(MarketConfig, raw, "market config")
    config.data = data
    config.validate()
    return config


def preset_from_dict(raw: dict) -> ExperimentPreset:
    """Parse a config document.

    ``preset`` (optional) picks a named base config; keys in ``market`` and
    ``experiment`` override it field by field (``market.data`` likewise).
    """
    if not isinstance(raw, dict):
        raise MarketError("bad-config", "config root must be a JSON object")
    unknown = sorted(set(raw) - {"schema", "preset", "market", "experiment"})
    if unknown:
        raise MarketError("bad-config", f"unknown top-level key(s): {', '.join(unknown)}")
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise MarketError("bad-config", f"unsupported schema version {schema!r}")
    name = raw.get("preset")
    base = preset(name) if name is not None else ExperimentPreset("custom", MarketConfig())
    merged = base.market.to_dict()
    overrides = raw.get("market", {})
    if not isinstance(overrides, dict):
        raise MarketError("bad-config", "market must be a JSON object")
    data_overrides = overrides.get("data", {})
    if not isinstance(data_overrides, dict):
        raise MarketError("bad-config", "market.data must be a JSON object")
    merged.update({k: v for k, v in overrides.items() if k != "data"})
    merged["data"] = {**merged["data"], **data_overrides}
    experiment = {**dataclasses.asdict(base.experiment), **raw.get("experiment", {})}
    return ExperimentPreset(
        name=base.name,
        market=market_from_dict(merged),
        experiment=_build(ExperimentSettings, experiment, "experiment"),
    )


def load_config(path: str | Path) -> ExperimentPreset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MarketError("bad-config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketError("bad-config", f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    try:
        return preset_from_dict(raw)
    except TypeError as exc:
        raise MarketError("bad-config", f"{path}: {exc}") from exc


def to_document(p: ExperimentPreset) -> dict[str, Any]:
    return {
        "schema": SCHEMA_VERSION,
        "preset": p.name if p.name in PRESET_NAMES else None,
        "market": p.market.to_dict(),
        "experiment": dataclasses.asdict(p.experiment),
    }


def config_hash(p: ExperimentPreset, command: str = "") -> str:
    blob = json.dumps({"command": command, **to_document(p)}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def engineered_noise(n_clients: int, clean: int, low: float, high: float, seed: int) -> list[float]:
    """``clean`` noise-free sellers at seeded-random ids; the rest evenly spread over [low, high]."""
    rates = np.zeros(n_clients)
    ids = np.random.default_rng(seed).permutation(n_clients)
    rates[ids[clean:]] = np.linspace(low, high, n_clients - clean)
    return rates.tolist()


def clean_ids(config: MarketConfig) -> list[int]:
    return [i for i, r in enumerate(config.data.noise_rates(config.n_clients)) if r == 0.0]


# Quality-heterogeneous task used by the strategy, participation, removal and
# ablation studies: an ill-conditioned three-class problem that takes the
# whole run to learn, so selection quality shows up in the accuracy curves.
ENGINEERED_DATA = dict(classes=3, features=20, samples=2000, class_separation=2.0, conditioning=3.0)
ENGINEERED_ETA = 3.0


def _engineered(n_clients: int, m: int, seed: int, strategy: str = "ucb") -> MarketConfig:
    clean = n_clients // 4
    return MarketConfig(
        n_clients=n_clients,
        m=m,
        rounds=100,
        eta=ENGINEERED_ETA,
        strategy=strategy,
        seed=seed,
        data=DataConfig(
            seed=seed,
            label_noise=engineered_noise(n_clients, clean, 0.4, 0.6, seed),
            **ENGINEERED_DATA,
        ),
    )


def with_seed(config: MarketConfig, seed: int) -> MarketConfig:
    """Reseed a config; engineered noise placement follows the new seed."""
    out = dataclasses.replace(config, seed=seed, data=dataclasses.replace(config.data, seed=seed))
    rates = config.data.noise_rates(config.n_clients)
    clean = sum(r == 0.0 for r in rates)
    noisy = sorted(r for r in rates if r > 0.0)
    if noisy and clean:
        # move the same multiset of rates to the new seed's placement
        ids = np.random.default_rng(seed).permutation(config.n_clients)
        new = np.zeros(config.n_clients)
        new[ids[clean:]] = noisy
        out.data.label_noise = new.tolist()
    return out


def preset(name: str, seed: int = 0) -> ExperimentPreset:
    if name == "selection-dist":
        config = MarketConfig(n_clients=20, m=5, rounds=100, seed=seed, data=DataConfig(seed=seed, alpha=0.5))
        return ExperimentPreset(name, config, ExperimentSettings(strategies=["ucb", "random"]))
    if name == "remove-clients":
        return ExperimentPreset(name, _engineered(50, 5, seed))
    if name == "participation-profile":
        return ExperimentPreset(name, _engineered(20, 5, seed), ExperimentSettings(strategies=["ucb", "random"]))
    if name == "strategy-compare":
        return ExperimentPreset(name, _engineered(20, 5, seed))
    if name == "ce-ablation":
        return ExperimentPreset(name, _engineered(20, 5, seed), ExperimentSettings(strategies=["ucb", "random"]))
    raise MarketError("bad-config", f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
