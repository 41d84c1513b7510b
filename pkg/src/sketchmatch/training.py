"""Optimization loop minimizing the joint loss with SGD + momentum."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig
from .datamodel import DatasetManifest, PairedSet, load_paired_set
from .exceptions import ConfigurationError, NumericError
from .losses import ContrastiveConfig, LossWeights, total_loss
from .network import (CoupledModel, build_model, gradients, load_checkpoint, preset_configs,
                      read_checkpoint, model_from_payload, save_checkpoint)
from .sampling import ImpostorSampler, PairBatch

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("step", "epoch", "L1", "L2", "L3", "LT", "wall_ms")


def desk_augment(height: int = 32, width: int = 32) -> AugmentConfig:
    return AugmentConfig(num_control_points=25, max_displacement=1.0, scale_min=1.0,
                         scale_max=1.15, crop_height=height, crop_width=width,
                         flip_probability=0.5)


@dataclass
class TrainConfig:
    optimizer: str = "sgd_momentum"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    augment: AugmentConfig | None = field(default_factory=desk_augment)
    use_attributes: bool = True
    backbone: str = "desk"
    embedding_dim: int | None = None
    input_height: int = 32
    input_width: int = 32
    dtype: str = "float64"

    def __post_init__(self):
        if self.optimizer != "sgd_momentum":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ConfigurationError("learning_rate must be finite and non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError("dtype must be float32 or float64")

    @property
    def input_size(self) -> tuple[int, int]:
        return self.input_height, self.input_width

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)


@dataclass
class TrainState:
    model: CoupledModel
    velocity: dict[str, torch.Tensor]
    rng: np.random.Generator
    epoch: int = 0
    step: int = 0
    history: list[dict] = field(default_factory=list)


def init_state(cfg: TrainConfig, attribute_count: int = 12,
               init_model: CoupledModel | None = None) -> TrainState:
    if init_model is None:
        photo_cfg, sketch_cfg = preset_configs(cfg.backbone, attribute_count, cfg.embedding_dim)
        model = build_model(photo_cfg, sketch_cfg, seed=cfg.seed, dtype=cfg.torch_dtype)
    else:
        model = copy.deepcopy(init_model).to(cfg.torch_dtype)
    velocity = {n: torch.zeros_like(p) for n, p in model.named_parameters()}
    # offset keeps the data stream independent of the init stream
    return TrainState(model, velocity, np.random.default_rng([cfg.seed, 1]))


def momentum_update(params: dict[str, torch.Tensor], velocity: dict[str, torch.Tensor],
                    grads: dict[str, torch.Tensor], lr: float, momentum: float) -> None:
    """In place: v <- mu v - lr g ; w <- w + v."""
    with torch.no_grad():
        for name, p in params.items():
            v = velocity[name]
            v.mul_(momentum).sub_(lr * grads[name])
            p.add_(v)


def train_step(state: TrainState, batch: PairBatch, cfg: TrainConfig,
               inplace: bool = False) -> TrainState:
    """One augmented SGD-momentum step on the joint loss."""
    if not inplace:
        state = copy.deepcopy(state)
    t0 = time.perf_counter()
    if cfg.augment is not None:
        batch = batch.augmented(cfg.augment, state.rng.integers(0, 2**63 - 1))
    parts = total_loss(batch, state.model, cfg.weights, cfg.contrastive, cfg.use_attributes)
    for name, value in parts._asdict().items():
        if not torch.isfinite(value):
            raise NumericError(f"step {state.step}: loss component {name} is not finite ({float(value.detach())})")
    grads = gradients(state.model, lambda _: parts.LT)
    momentum_update(dict(state.model.named_parameters()), state.velocity, grads,
                    cfg.learning_rate, cfg.momentum)
    state.history.append({
        "step": state.step, "epoch": state.epoch, **parts.as_floats(),
        "wall_ms": round(1000.0 * (time.perf_counter() - t0), 3),
    })
    state.step += 1
    return state


def steps_per_epoch(n_pairs: int, batch_size: int) -> int:
    return math.ceil(n_pairs / batch_size)


def run_epoch(state: TrainState, data: PairedSet, sampler: ImpostorSampler,
              cfg: TrainConfig) -> TrainState:
    order = state.rng.permutation(len(data))
    for start in range(0, len(order), cfg.batch_size):
        batch = sampler.batch(order[start:start + cfg.batch_size], state.rng)
        train_step(state, batch, cfg, inplace=True)
    state.epoch += 1
    return state


def fit(data: PairedSet, cfg: TrainConfig, init_model: CoupledModel | None = None,
        state: TrainState | None = None, on_epoch=None) -> TrainState:
    """Train in memory for ``cfg.epochs`` epochs (continuing ``state`` when given)."""
    state = state or init_state(cfg, len(data.vocabulary), init_model)
    if cfg.epochs == 0 or state.epoch >= cfg.epochs:
        return state
    sampler = ImpostorSampler(data)
    while state.epoch < cfg.epochs:
        run_epoch(state, data, sampler, cfg)
        if on_epoch is not None:
            on_epoch(state)
        last = [h["LT"] for h in state.history if h["epoch"] == state.epoch - 1]
        logger.info("epoch %d/%d mean LT %.4f", state.epoch, cfg.epochs, float(np.mean(last)))
    return state


def _state_extra(state: TrainState, config_hash: str | None) -> dict:
    return {
        "epoch": state.epoch,
        "step": state.step,
        "rng": json.dumps(state.rng.bit_generator.state),
        "velocity": {k: v.clone() for k, v in state.velocity.items()},
        "config_hash": config_hash or "",
    }


def _restore_state(path) -> TrainState:
    payload = read_checkpoint(path)
    model = model_from_payload(payload, path)
    extra = payload["extra"]
    rng = np.random.default_rng()
    rng.bit_generator.state = json.loads(extra["rng"])
    return TrainState(model, dict(extra["velocity"]), rng, extra["epoch"], extra["step"])


def train(dataset, cfg: TrainConfig, out, init_from=None, resume: bool = False,
          config_hash: str | None = None) -> tuple[Path, Path]:
    """Train from a manifest (or loaded pairs), writing checkpoint and metrics CSV to ``out``.

    A checkpoint is written after every epoch, so an interrupted run keeps
    its last completed epoch; ``resume=True`` continues from it.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, metrics = out / "checkpoint.pt", out / "metrics.csv"
    data = load_paired_set(dataset, cfg.input_size) if isinstance(dataset, DatasetManifest) else dataset

    if resume and ckpt.exists():
        state = _restore_state(ckpt)
        if state.epoch > 0 and metrics.exists():
            _truncate_metrics(metrics, state.step)
    else:
        init_model = load_checkpoint(init_from) if init_from else None
        state = init_state(cfg, len(data.vocabulary), init_model)
        with open(metrics, "w", newline="") as fh:
            csv.writer(fh).writerow(METRIC_COLUMNS)
        save_checkpoint(state.model, ckpt, _state_extra(state, config_hash))

    def on_epoch(s: TrainState):
        new_rows = [h for h in s.history if h["epoch"] == s.epoch - 1]
        with open(metrics, "a", newline="") as fh:
            w = csv.writer(fh)
            for h in new_rows:
                w.writerow([h[c] for c in METRIC_COLUMNS])
        save_checkpoint(s.model, ckpt, _state_extra(s, config_hash))

    fit(data, cfg, state=state, on_epoch=on_epoch)
    return ckpt, metrics


def _truncate_metrics(path: Path, n_steps: int) -> None:
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[: n_steps + 1]))


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
