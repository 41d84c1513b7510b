"""Synthetic sketches from photographs with the extended difference-of-Gaussians."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .datamodel import DatasetManifest, ManifestEntry, read_image, write_image, write_manifest
from .exceptions import DomainError

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class XDoGParams:
    sigma: float = 0.8
    k: float = 1.6
    tau: float = 0.98
    epsilon: float = -0.01
    phi: float = 100.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"xDoG sigma must be positive, got {self.sigma}")
        if not self.k > 1:
            raise DomainError(f"xDoG k must exceed 1, got {self.k}")
        if not self.phi > 0:
            raise DomainError(f"xDoG phi must be positive, got {self.phi}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian sampled on [-ceil(3 sigma), ceil(3 sigma)]."""
    if sigma < 0:
        raise DomainError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with half-sample symmetric (reflective) borders.

    Accepts H x W or H x W x C arrays; each channel is blurred independently.
    """
    kernel = gaussian_kernel(sigma)
    out = np.asarray(image, dtype=np.float64)
    if kernel.size == 1:
        return out.copy()
    out = correlate1d(out, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def luminance(rgb: np.ndarray) -> np.ndarray:
    """H x W x 3 -> H x W x 1 with BT.601 weights."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] == 1:
        return rgb.copy()
    return (rgb @ LUMA_WEIGHTS)[..., None]


def difference_of_gaussians(image: np.ndarray, params: XDoGParams) -> np.ndarray:
    return gaussian_blur(image, params.sigma) - params.tau * gaussian_blur(
        image, params.k * params.sigma
    )


def soft_threshold(dog: np.ndarray, epsilon: float, phi: float) -> np.ndarray:
    out = np.where(dog >= epsilon, 1.0, 1.0 + np.tanh(phi * (dog - epsilon)))
    return np.clip(out, 0.0, 1.0)


def xdog(image: np.ndarray, params: XDoGParams | None = None) -> np.ndarray:
    """Line-drawing rendition of a grayscale image; output in [0, 1]."""
    params = params or XDoGParams()
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    out = soft_threshold(difference_of_gaussians(image, params), params.epsilon, params.phi)
    return out[..., 0] if squeeze else out


def photo_to_sketch(photo: np.ndarray, params: XDoGParams | None = None) -> np.ndarray:
    return xdog(luminance(photo), params)


def sketchify_dataset(
    manifest: DatasetManifest, params: XDoGParams, out_dir, manifest_name: str = "manifest.csv"
) -> DatasetManifest:
    """Render one xDoG sketch per photo into ``out_dir/sketches`` and write a new manifest."""
    out_dir = Path(out_dir)
    try:
        (out_dir / "sketches").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")

    entries = []
    for row, e in enumerate(manifest.photo_entries()):
        src = manifest.resolve(e.photo_path)
        sketch = photo_to_sketch(read_image(src, 3), params)
        rel_sketch = f"sketches/{row:06d}_{e.identity}.png"
        write_image(out_dir / rel_sketch, sketch)
        rel_photo = os.path.relpath(src.resolve(), out_dir.resolve())
        entries.append(
            ManifestEntry(rel_photo, rel_sketch, e.identity, e.attributes, e.witness_attributes)
        )
    new = replace(manifest, entries=entries, root=out_dir)
    write_manifest(new, out_dir / manifest_name)
    return new
