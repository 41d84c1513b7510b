"""Coupled photo / sketch+attribute embedding networks.

Each branch is a VGG-style trunk (3x3 conv + ReLU, 2x2 max pool between
stages) whose last stage is globally average pooled into the embedding.
A linear head on the embedding gives one logit per attribute.
"""

from __future__ import annotations

import hashlib
import io
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .exceptions import ConfigurationError, DimensionError, IncompatibleCheckpointError, NumericError

CHECKPOINT_FORMAT = "sketchmatch-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class BackboneConfig:
    """Trunk layout: ``blocks[s]`` lists the conv widths of stage ``s``.

    The last width of the last stage is the embedding dimension.
    """

    blocks: tuple[tuple[int, ...], ...]
    input_channels: int
    attribute_count: int = 12

    def __post_init__(self):
        blocks = tuple(tuple(int(w) for w in stage) for stage in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks or any(not stage for stage in blocks):
            raise ConfigurationError("backbone needs at least one stage with one conv")
        if any(w < 1 for stage in blocks for w in stage):
            raise ConfigurationError("conv widths must be positive")
        if self.input_channels < 1 or self.attribute_count < 1:
            raise ConfigurationError("input_channels and attribute_count must be positive")

    @property
    def embedding_dim(self) -> int:
        return self.blocks[-1][-1]

    @property
    def min_input_size(self) -> int:
        return 2 ** (len(self.blocks) - 1)

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneConfig":
        return cls(tuple(tuple(s) for s in d["blocks"]), int(d["input_channels"]),
                   int(d.get("attribute_count", 12)))


FULL_BLOCKS = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (256, 256, 64))
DESK_BLOCKS = ((8,), (16,), (32, 16))
TINY_BLOCKS = ((4,), (8,))

PRESETS = {"full": FULL_BLOCKS, "desk": DESK_BLOCKS, "tiny": TINY_BLOCKS}


def preset_configs(name: str = "desk", attribute_count: int = 12,
                   embedding_dim: int | None = None) -> tuple[BackboneConfig, BackboneConfig]:
    """(photo, sketch) configs for a named preset; sketch input is 1 + T channels."""
    try:
        blocks = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown backbone preset {name!r}; choose from {sorted(PRESETS)}") from None
    if embedding_dim is not None:
        blocks = blocks[:-1] + (blocks[-1][:-1] + (int(embedding_dim),),)
    return (BackboneConfig(blocks, 3, attribute_count),
            BackboneConfig(blocks, 1 + attribute_count, attribute_count))


class Branch(nn.Module):
    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        convs = []
        in_ch = config.input_channels
        for stage in config.blocks:
            for width in stage:
                convs.append(nn.Conv2d(in_ch, width, kernel_size=3, padding=1))
                in_ch = width
        self.convs = nn.ModuleList(convs)
        self.heads = nn.Linear(config.embedding_dim, config.attribute_count)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Final-stage feature maps (N x D x h x w) before pooling."""
        layer = 0
        n_stages = len(self.config.blocks)
        n_convs = len(self.convs)
        for s, stage in enumerate(self.config.blocks):
            for _ in stage:
                x = self.convs[layer](x)
                layer += 1
                # embedding conv stays linear
                if layer < n_convs:
                    x = F.relu(x)
            if s < n_stages - 1:
                x = F.max_pool2d(x, 2)
        return x

    def forward(self, x: torch.Tensor):
        # inputs arrive in [0, 1]; centre them for the ReLU trunk
        emb = self.features(x - 0.5).mean(dim=(2, 3))
        return emb, self.heads(emb)


class CoupledModel(nn.Module):
    """Photo branch and sketch+attribute branch sharing one embedding space."""

    def __init__(self, photo_config: BackboneConfig, sketch_config: BackboneConfig):
        super().__init__()
        if photo_config.embedding_dim != sketch_config.embedding_dim:
            raise ConfigurationError(
                f"embedding dims differ: photo {photo_config.embedding_dim}, "
                f"sketch {sketch_config.embedding_dim}"
            )
        if photo_config.attribute_count != sketch_config.attribute_count:
            raise ConfigurationError("attribute counts differ between branches")
        self.photo = Branch(photo_config)
        self.sketch = Branch(sketch_config)

    @property
    def photo_config(self) -> BackboneConfig:
        return self.photo.config

    @property
    def sketch_config(self) -> BackboneConfig:
        return self.sketch.config

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype


def build_model(photo_cfg: BackboneConfig, sketch_cfg: BackboneConfig, seed: int = 0,
                dtype: torch.dtype = torch.float64) -> CoupledModel:
    """He fan-in initialization for weights, zero biases; deterministic in ``seed``."""
    model = CoupledModel(photo_cfg, sketch_cfg).to(dtype)
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = int(np.prod(p.shape[1:]))
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64)
                        * np.sqrt(2.0 / fan_in))
    return model


def to_tensor(images, channels: int, dtype: torch.dtype) -> torch.Tensor:
    """N x H x W x C array (or a single H x W x C image) -> N x C x H x W tensor."""
    if isinstance(images, torch.Tensor):
        x = images
    else:
        x = torch.from_numpy(np.ascontiguousarray(images))
    if x.ndim == 3:
        x = x.unsqueeze(0)
    if x.ndim != 4 or x.shape[-1] != channels:
        raise DimensionError(f"expected N x H x W x {channels} input, got shape {tuple(x.shape)}")
    return x.permute(0, 3, 1, 2).to(dtype)


def _forward(branch: Branch, images, dtype) -> tuple[torch.Tensor, torch.Tensor]:
    x = to_tensor(images, branch.config.input_channels, dtype)
    if min(x.shape[2:]) < branch.config.min_input_size:
        raise DimensionError(f"input {tuple(x.shape[2:])} too small for {len(branch.config.blocks)} stages")
    return branch(x)


def forward_photo(model: CoupledModel, images) -> tuple[torch.Tensor, torch.Tensor]:
    """(embeddings N x D, attribute logits N x T) for RGB photos."""
    return _forward(model.photo, images, model.dtype)


def forward_sketch(model: CoupledModel, encoded) -> tuple[torch.Tensor, torch.Tensor]:
    """Same as :func:`forward_photo` for attribute-encoded sketches (1 + T channels)."""
    return _forward(model.sketch, encoded, model.dtype)


def gradients(model: nn.Module, loss_closure: Callable[[nn.Module], torch.Tensor]) -> dict[str, torch.Tensor]:
    """Exact gradients of a scalar loss with respect to every named parameter."""
    loss = loss_closure(model)
    if not torch.is_tensor(loss):
        loss = torch.as_tensor(loss, dtype=model.dtype)
    if loss.numel() != 1:
        raise DimensionError("loss closure must return a scalar")
    if not torch.isfinite(loss).all():
        raise NumericError(f"loss is not finite: {loss.item()}")
    names, params = zip(*model.named_parameters())
    if not loss.requires_grad:
        return {n: torch.zeros_like(p) for n, p in zip(names, params)}
    grads = torch.autograd.grad(loss.reshape(()), params, allow_unused=True)
    return {n: torch.zeros_like(p) if g is None else g for n, p, g in zip(names, params, grads)}


def model_fingerprint(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def save_checkpoint(model: CoupledModel, path, extra: dict | None = None) -> Path:
    """Write a versioned checkpoint atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "photo_config": asdict(model.photo_config),
        "sketch_config": asdict(model.sketch_config),
        "dtype": str(model.dtype).removeprefix("torch."),
        "fingerprint": model_fingerprint(model),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)
    return path


def read_checkpoint(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise IncompatibleCheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise IncompatibleCheckpointError(f"{path}: not a sketchmatch checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path}: checkpoint version {payload.get('version')!r}, expected {CHECKPOINT_VERSION}"
        )
    return payload


def model_from_payload(payload: dict, path="checkpoint") -> CoupledModel:
    photo_cfg = BackboneConfig.from_dict(payload["photo_config"])
    sketch_cfg = BackboneConfig.from_dict(payload["sketch_config"])
    model = CoupledModel(photo_cfg, sketch_cfg).to(getattr(torch, payload.get("dtype", "float64")))
    try:
        model.load_state_dict(payload["state_dict"], strict=True)
    except RuntimeError as exc:
        raise IncompatibleCheckpointError(f"{path}: weights do not match recorded configs ({exc})") from None
    return model


def load_checkpoint(path) -> CoupledModel:
    return model_from_payload(read_checkpoint(path), path)
