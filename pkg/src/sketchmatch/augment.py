"""Geometric augmentation: control-point deformation, scale-and-crop, flip.

All operators take H x W x C float images and are pure given their seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import map_coordinates

from .datamodel import PhotoSample, SketchSample
from .exceptions import ConfigurationError


@dataclass(frozen=True)
class AugmentConfig:
    num_control_points: int = 25
    max_displacement: float = 5.0
    scale_min: float = 1.0
    scale_max: float = 1.15
    crop_height: int = 250
    crop_width: int = 200
    flip_probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigurationError(f"flip_probability must be in [0, 1], got {self.flip_probability}")
        if self.scale_min > self.scale_max:
            raise ConfigurationError("scale_min must not exceed scale_max")
        if self.scale_min <= 0:
            raise ConfigurationError("scale_min must be positive")
        if self.max_displacement < 0:
            raise ConfigurationError("max_displacement must be non-negative")
        if self.crop_height < 1 or self.crop_width < 1:
            raise ConfigurationError("crop dimensions must be positive")
        if self.num_control_points < 1:
            raise ConfigurationError("num_control_points must be positive")

    @property
    def crop_size(self) -> tuple[int, int]:
        return self.crop_height, self.crop_width


def _grid_side(num_control_points: int) -> int:
    side = math.isqrt(num_control_points)
    if side * side != num_control_points:
        raise ConfigurationError(
            f"num_control_points must be a perfect square, got {num_control_points}"
        )
    return side


def control_grid(height: int, width: int, num_control_points: int) -> np.ndarray:
    """Centered uniform grid of (row, col) control points, shape P x 2.

    Each axis is cut into sqrt(P) equal cells and a point sits at each cell
    center, so a 100 x 100 image with 25 points uses {10, 30, 50, 70, 90}.
    """
    side = _grid_side(num_control_points)
    rows = (np.arange(side) + 0.5) * height / side
    cols = (np.arange(side) + 0.5) * width / side
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _tps_radial(r2: np.ndarray) -> np.ndarray:
    # r^2 log r written in terms of r^2; zero at the origin
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * r2 * np.log(r2)
    return np.where(r2 > 0, out, 0.0)


@lru_cache(maxsize=32)
def _tps_operator(height: int, width: int, num_control_points: int) -> np.ndarray:
    """Dense (H*W) x P matrix mapping control-point shifts to a pixel shift field."""
    ctrl = control_grid(height, width, num_control_points)
    p = len(ctrl)
    d2 = ((ctrl[:, None, :] - ctrl[None, :, :]) ** 2).sum(-1)
    system = np.zeros((p + 3, p + 3))
    system[:p, :p] = _tps_radial(d2)
    affine = np.hstack([np.ones((p, 1)), ctrl])
    system[:p, p:] = affine
    system[p:, :p] = affine.T
    # columns 0..P-1 of the inverse give weights for each control shift
    coeffs = np.linalg.pinv(system)[:, :p]

    rr, cc = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    pix = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    pd2 = ((pix[:, None, :] - ctrl[None, :, :]) ** 2).sum(-1)
    basis = np.hstack([_tps_radial(pd2), np.ones((len(pix), 1)), pix])
    op = basis @ coeffs
    op.setflags(write=False)
    return op


def tps_displacement_field(shape: tuple[int, int], num_control_points: int,
                           shifts: np.ndarray) -> np.ndarray:
    """Interpolate P x 2 control shifts into an H x W x 2 displacement field."""
    h, w = shape
    op = _tps_operator(h, w, num_control_points)
    return (op @ np.asarray(shifts, dtype=np.float64)).reshape(h, w, 2)


def warp(image: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Bilinear backward warp: out(p) = image(p - field(p)), edges clamped."""
    h, w = image.shape[:2]
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    coords = np.stack([rr - field[..., 0], cc - field[..., 1]])
    out = np.empty_like(image, dtype=np.float64)
    for ch in range(image.shape[2]):
        out[..., ch] = map_coordinates(image[..., ch], coords, order=1, mode="nearest")
    return out


def random_deform(image: np.ndarray, config: AugmentConfig, seed) -> np.ndarray:
    """Shift each grid control point by a random vector and warp by thin-plate spline."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h <= 2 or w <= 2:
        raise ConfigurationError(f"image too small to deform: {h} x {w}")
    _grid_side(config.num_control_points)
    rng = np.random.default_rng(seed)
    p = config.num_control_points
    angle = rng.uniform(0.0, 2.0 * np.pi, size=p)
    magnitude = rng.uniform(0.0, 1.0, size=p) * config.max_displacement
    if config.max_displacement == 0:
        return image.copy()
    shifts = np.stack([magnitude * np.sin(angle), magnitude * np.cos(angle)], axis=1)
    return warp(image, tps_displacement_field((h, w), p, shifts))


def _resize_axis(image: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = image.shape[axis]
    if new_len == old_len:
        return image
    src = (np.arange(new_len) + 0.5) * (old_len / new_len) - 0.5
    src = np.clip(src, 0.0, old_len - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, old_len - 1)
    frac = src - lo
    shape = [1] * image.ndim
    shape[axis] = new_len
    frac = frac.reshape(shape)
    return np.take(image, lo, axis=axis) * (1.0 - frac) + np.take(image, hi, axis=axis) * frac


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Separable bilinear resize with pixel-center alignment."""
    out = _resize_axis(np.asarray(image, dtype=np.float64), height, 0)
    return _resize_axis(out, width, 1)


def center_crop(image: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h < height or w < width:
        raise ConfigurationError(f"cannot crop {height} x {width} from {h} x {w}")
    top, left = (h - height) // 2, (w - width) // 2
    return image[top:top + height, left:left + width].copy()


def scale_and_crop(image: np.ndarray, config: AugmentConfig, seed) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h * config.scale_min < config.crop_height or w * config.scale_min < config.crop_width:
        raise ConfigurationError(
            f"{h} x {w} image scaled by {config.scale_min} does not cover the "
            f"{config.crop_height} x {config.crop_width} crop"
        )
    scale = np.random.default_rng(seed).uniform(config.scale_min, config.scale_max)
    nh = max(config.crop_height, int(round(h * scale)))
    nw = max(config.crop_width, int(round(w * scale)))
    return center_crop(resize_bilinear(image, nh, nw), config.crop_height, config.crop_width)


def hflip(image: np.ndarray) -> np.ndarray:
    return np.asarray(image)[:, ::-1].copy()


def augment_image(image: np.ndarray, config: AugmentConfig, deform_seed, scale_seed,
                  flip: bool) -> np.ndarray:
    out = random_deform(image, config, deform_seed)
    out = scale_and_crop(out, config, scale_seed)
    return hflip(out) if flip else out


def augment_pair(photo: PhotoSample, sketch: SketchSample, config: AugmentConfig,
                 seed) -> tuple[PhotoSample, SketchSample]:
    """Augment a photo/sketch pair.

    The flip decision is shared so left/right correspondence survives;
    deformation and scale draws are independent per modality.
    """
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < config.flip_probability)
    seeds = rng.integers(0, 2**63 - 1, size=4)
    photo_img = augment_image(photo.image, config, seeds[0], seeds[1], flip)
    sketch_img = augment_image(sketch.image, config, seeds[2], seeds[3], flip)
    return (
        PhotoSample(photo_img, photo.identity, photo.attributes.copy()),
        SketchSample(sketch_img, sketch.identity, sketch.attributes.copy(),
                     sketch.witness_attributes.copy()),
    )
