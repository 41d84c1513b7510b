"""S1 / S2 / S3 identification protocols with repeated random splits.

S1: split one dataset by identity, train on one part, identify the other's
sketches against its photos. S2: as S1 with distractor photos appended to
the gallery. S3: train on separate datasets, test on an unseen one
(gallery = probe identities' photos plus distractors).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .datamodel import PairedSet, PhotoSample, SplitSpec, split_dataset
from .estimator import AttributeAssistedMatcher
from .evaluation import build_gallery, cmc_curve, extend_gallery, identify_all
from .exceptions import ConfigurationError, SketchMatchError
from .network import model_fingerprint
from .training import TrainConfig

logger = logging.getLogger(__name__)

REPORT_FORMAT = "sketchmatch-report/1"
DEFAULT_RANKS = (1, 5, 10, 20, 50)


@dataclass
class ProtocolConfig:
    name: str = "S1"
    folds: int = 10
    seed: int = 0
    train_fraction: float = 0.4
    ranks: tuple[int, ...] = DEFAULT_RANKS
    dataset: PairedSet | None = None  # S1 / S2
    train_set: PairedSet | None = None  # S3
    probe_set: PairedSet | None = None  # S3
    distractors: Sequence[PhotoSample] = field(default_factory=list)

    def __post_init__(self):
        if self.name not in ("S1", "S2", "S3"):
            raise ConfigurationError(f"unknown protocol {self.name!r}")
        if self.folds < 1:
            raise ConfigurationError("folds must be at least 1")
        if self.name in ("S2", "S3") and not len(self.distractors):
            raise ConfigurationError(f"protocol {self.name} requires distractor photos")
        if self.name == "S3":
            if self.train_set is None or self.probe_set is None:
                raise ConfigurationError("S3 needs a training set and a probe set")
        elif self.dataset is None:
            raise ConfigurationError(f"{self.name} needs a dataset to split")


def fold_seeds(seed: int, folds: int) -> list[tuple[int, int]]:
    """Independent (split seed, training seed) per fold derived from ``seed``."""
    return [tuple(int(s) for s in ss.generate_state(2, dtype=np.uint32))
            for ss in np.random.SeedSequence(seed).spawn(folds)]


def format_mean_std(mean: float, std: float) -> str:
    return f"{100.0 * mean:.1f} ± {100.0 * std:.1f}"


def summarize(fold_accuracies: list[dict[int, float]], ranks: Sequence[int]) -> dict:
    summary = {}
    for k in ranks:
        vals = [f[k] for f in fold_accuracies if k in f]
        if len(vals) != len(fold_accuracies):
            continue
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        summary[str(k)] = {"mean": mean, "std": std, "formatted": format_mean_std(mean, std)}
    return summary


def run_fold(train: PairedSet, test: PairedSet, distractors, train_cfg: TrainConfig,
             ranks: Sequence[int], init_model=None) -> dict:
    matcher = AttributeAssistedMatcher.from_train_config(train_cfg).fit(train, init_model=init_model)
    model = matcher.model_
    gallery = build_gallery(test.photo_samples(), model)
    if len(distractors):
        gallery = extend_gallery(gallery, distractors, model)
    results = identify_all(test.sketches, test.witness_attributes, test.identities, gallery,
                           model, train_cfg.use_attributes)
    curve = cmc_curve(results)
    history = matcher.history_
    return {
        "train_identities": np.unique(train.identities).tolist(),
        "test_identities": np.unique(test.identities).tolist(),
        "gallery_size": len(gallery),
        "probe_count": len(results),
        "cmc": curve.tolist(),
        "rank_accuracy": {str(k): float(curve[k - 1]) for k in ranks if k <= len(curve)},
        "first_epoch_LT": _epoch_mean(history, 0),
        "last_epoch_LT": _epoch_mean(history, train_cfg.epochs - 1),
    }


def _epoch_mean(history, epoch) -> float | None:
    vals = [h["LT"] for h in history if h["epoch"] == epoch]
    return float(np.mean(vals)) if vals else None


def run_protocol(cfg: ProtocolConfig, train_cfg: TrainConfig, config_hash: str = "",
                 init_model=None) -> dict:
    """Train and evaluate ``cfg.folds`` seeded repetitions; returns a JSON-ready report.

    With ``init_model`` every fold fine-tunes from the same pretrained weights.
    """
    folds = []
    for f, (split_seed, train_seed) in enumerate(fold_seeds(cfg.seed, cfg.folds)):
        fold_cfg = replace(train_cfg, seed=train_seed)
        try:
            if cfg.name == "S3":
                train, test = cfg.train_set, cfg.probe_set
            else:
                train, test = split_dataset(cfg.dataset, SplitSpec(cfg.train_fraction, split_seed))
            distractors = cfg.distractors if cfg.name != "S1" else []
            result = run_fold(train, test, distractors, fold_cfg, cfg.ranks, init_model)
        except SketchMatchError as exc:
            raise type(exc)(f"fold {f}: {exc}") from exc
        logger.info("fold %d: train %d ids, test %d ids, rank-1 %.3f", f,
                    len(result["train_identities"]), len(result["test_identities"]),
                    result["cmc"][0])
        folds.append({"fold": f, "split_seed": split_seed, "train_seed": train_seed, **result})

    accs = [{int(k): v for k, v in fr["rank_accuracy"].items()} for fr in folds]
    train_dict = asdict(train_cfg)
    train_dict.pop("seed")
    return {
        "format": REPORT_FORMAT,
        "protocol": cfg.name,
        "folds": cfg.folds,
        "seed": cfg.seed,
        "train_fraction": cfg.train_fraction if cfg.name != "S3" else None,
        "config_hash": config_hash,
        "train_config": train_dict,
        "init_fingerprint": model_fingerprint(init_model) if init_model is not None else None,
        "summary": summarize(accs, cfg.ranks),
        "fold_results": folds,
    }


def mean_cmc(report: dict) -> np.ndarray:
    curves = [np.asarray(f["cmc"]) for f in report["fold_results"]]
    m = min(len(c) for c in curves)
    return np.mean([c[:m] for c in curves], axis=0)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def report_hash(report: dict) -> str:
    return hashlib.sha256(dumps_report(report).encode()).hexdigest()[:16]
