"""Contrastive verification loss, attribute losses and their weighted total."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch.nn import functional as F

from .exceptions import ConfigurationError, DimensionError, DomainError

GENUINE, IMPOSTOR = 0, 1


@dataclass(frozen=True)
class ContrastiveConfig:
    margin: float = 1.0

    def __post_init__(self):
        if not (self.margin > 0 and math.isfinite(self.margin)):
            raise ConfigurationError(f"margin must be positive and finite, got {self.margin}")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and non-negative, got {v}")


class LossBreakdown(NamedTuple):
    L1: torch.Tensor
    L2: torch.Tensor
    L3: torch.Tensor
    LT: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self._asdict().items()}


def _as_tensor(x) -> torch.Tensor:
    if torch.is_tensor(x):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def squared_distance(a, b) -> torch.Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"embedding lengths differ: {a.shape[-1]} vs {b.shape[-1]}")
    return ((a - b) ** 2).sum(-1)


def euclidean_distance(a, b) -> torch.Tensor:
    """L2 distance along the last axis; gradient is taken as zero at coincidence."""
    sq = squared_distance(a, b)
    positive = sq > 0
    safe = torch.where(positive, sq, torch.ones_like(sq))
    return torch.where(positive, torch.sqrt(safe), torch.zeros_like(sq))


def contrastive_loss(a, b, label, cfg: ContrastiveConfig = ContrastiveConfig()) -> torch.Tensor:
    """Per-pair loss: genuine (label 0) gives D^2/2, impostor gives max(0, m - D)^2 / 2."""
    sq = squared_distance(a, b)
    label = _as_tensor(label).to(sq.dtype)
    genuine = 0.5 * sq
    impostor = 0.5 * torch.clamp(cfg.margin - euclidean_distance(a, b), min=0.0) ** 2
    return (1.0 - label) * genuine + label * impostor


def batch_verification_loss(photo_emb, sketch_emb, labels,
                            cfg: ContrastiveConfig = ContrastiveConfig()) -> torch.Tensor:
    """Mean contrastive loss over a batch of (photo, sketch, label) triples."""
    photo_emb = _as_tensor(photo_emb)
    if photo_emb.ndim != 2 or photo_emb.shape[0] == 0:
        raise DomainError("verification loss needs a non-empty batch of embeddings")
    return contrastive_loss(photo_emb, sketch_emb, labels, cfg).mean()


def attribute_loss(logits, labels) -> torch.Tensor:
    """Summed binary cross entropy over attributes (natural log), from raw logits."""
    logits = _as_tensor(logits)
    labels = _as_tensor(labels).to(logits.dtype)
    if logits.shape != labels.shape:
        raise DimensionError(f"logits {tuple(logits.shape)} and labels {tuple(labels.shape)} differ")
    return F.binary_cross_entropy_with_logits(logits, labels, reduction="none").sum(-1)


def per_sample_mean(values: torch.Tensor, keys) -> torch.Tensor:
    """Average ``values`` so each distinct key carries equal weight.

    Instances sharing a key (the same sample appearing in several pairs)
    are averaged first, then the per-sample means are averaged.
    """
    keys = np.asarray(keys)
    uniq, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    w = 1.0 / (counts[inverse] * len(uniq))
    return (values * torch.as_tensor(w, dtype=values.dtype)).sum()


def joint_loss(photo_emb, photo_logits, sketch_emb, sketch_logits, labels, photo_attrs,
               sketch_attrs, photo_keys, sketch_keys, weights: LossWeights = LossWeights(),
               cfg: ContrastiveConfig = ContrastiveConfig()) -> LossBreakdown:
    """L_T = L_1 + lambda1 L_2 + lambda2 L_3 from per-triple network outputs."""
    l1 = batch_verification_loss(photo_emb, sketch_emb, labels, cfg)
    l2 = per_sample_mean(attribute_loss(photo_logits, photo_attrs), photo_keys)
    l3 = per_sample_mean(attribute_loss(sketch_logits, sketch_attrs), sketch_keys)
    return LossBreakdown(l1, l2, l3, l1 + weights.lambda1 * l2 + weights.lambda2 * l3)


def total_loss(pairs, model, weights: LossWeights = LossWeights(),
               cfg: ContrastiveConfig = ContrastiveConfig(),
               use_attributes: bool = True) -> LossBreakdown:
    """Evaluate the joint loss of ``model`` on a :class:`~sketchmatch.sampling.PairBatch`."""
    from .network import forward_photo, forward_sketch

    if len(pairs) == 0:
        raise DomainError("total loss needs a non-empty batch")
    arrays = pairs.arrays(use_attributes=use_attributes)
    p_emb, p_logits = forward_photo(model, arrays.photos)
    s_emb, s_logits = forward_sketch(model, arrays.sketches)
    return joint_loss(p_emb, p_logits, s_emb, s_logits, arrays.labels, arrays.photo_attrs,
                      arrays.sketch_attrs, arrays.photo_keys, arrays.sketch_keys, weights, cfg)
