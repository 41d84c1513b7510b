"""Run configuration: one JSON document holding every tunable.

Unknown keys are rejected at every level. The hash of the fully resolved
document is stamped into checkpoints, galleries and reports.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .exceptions import ConfigurationError
from .losses import ContrastiveConfig, LossWeights
from .sketch import XDoGParams
from .training import TrainConfig


@dataclass
class ProtocolSettings:
    name: str = "S1"
    folds: int = 10
    train_fraction: float = 0.4
    ranks: tuple[int, ...] = (1, 5, 10, 20, 50)


@dataclass
class RunConfig:
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    xdog: XDoGParams = field(default_factory=XDoGParams)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d, "config")

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        return dataclasses.replace(self, seed=seed,
                                   train=dataclasses.replace(self.train, seed=seed))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# nested dataclass-typed fields, resolved explicitly (annotations are strings)
_NESTED = {
    (RunConfig, "train"): TrainConfig,
    (RunConfig, "xdog"): XDoGParams,
    (RunConfig, "protocol"): ProtocolSettings,
    (TrainConfig, "weights"): LossWeights,
    (TrainConfig, "contrastive"): ContrastiveConfig,
    (TrainConfig, "augment"): AugmentConfig,
}


def _build(cls, d, where: str):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where}: expected a mapping, got {type(d).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for key, value in d.items():
        sub = _NESTED.get((cls, key))
        if sub is not None and value is not None:
            value = _build(sub, value, f"{where}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data)
