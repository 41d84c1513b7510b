"""Procedural face-like renderings used as a self-contained stand-in dataset.

Each identity has a geometry latent (face shape, eye/mouth placement) and an
attribute vector; hair colour, skin tone and glasses are drawn from the
attributes so that attributes correlate with appearance. Sketches are the
xDoG rendition of the photo's luminance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import (AttributeVocabulary, DatasetManifest, ManifestEntry, write_image,
                        write_manifest)
from .exceptions import DomainError
from .sketch import XDoGParams, photo_to_sketch

HAIR = ("bald", "black_hair", "blond_hair", "brown_hair", "gray_hair")
HAIR_P = (0.12, 0.3, 0.2, 0.24, 0.14)
ETHNICITY = ("asian", "indian", "white", "black")

HAIR_RGB = {
    "black_hair": (0.08, 0.07, 0.06),
    "blond_hair": (0.93, 0.82, 0.42),
    "brown_hair": (0.45, 0.27, 0.13),
    "gray_hair": (0.68, 0.68, 0.68),
}
SKIN_RGB = {
    "asian": (0.92, 0.78, 0.62),
    "indian": (0.72, 0.52, 0.37),
    "white": (0.96, 0.80, 0.72),
    "black": (0.42, 0.28, 0.20),
}
PALE_RGB = np.array([1.0, 0.95, 0.92])
BACKGROUND = np.array([0.82, 0.84, 0.86])


@dataclass(frozen=True)
class FaceLatent:
    face_w: float  # semi-axes as fractions of image size
    face_h: float
    eye_y: float
    eye_dx: float
    eye_r: float
    brow_gap: float
    nose_len: float
    mouth_y: float
    mouth_w: float
    hair_line: float
    skin_jitter: tuple[float, float, float]

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "FaceLatent":
        return cls(
            face_w=rng.uniform(0.25, 0.36), face_h=rng.uniform(0.33, 0.43),
            eye_y=rng.uniform(0.40, 0.50), eye_dx=rng.uniform(0.10, 0.18),
            eye_r=rng.uniform(0.025, 0.05), brow_gap=rng.uniform(0.05, 0.09),
            nose_len=rng.uniform(0.06, 0.14), mouth_y=rng.uniform(0.66, 0.76),
            mouth_w=rng.uniform(0.06, 0.14), hair_line=rng.uniform(0.25, 0.33),
            skin_jitter=tuple(rng.uniform(-0.04, 0.04, size=3)),
        )


def sample_attributes(rng: np.random.Generator, vocab: AttributeVocabulary) -> np.ndarray:
    present = [HAIR[rng.choice(len(HAIR), p=HAIR_P)], ETHNICITY[rng.integers(len(ETHNICITY))]]
    if rng.random() < 0.5:
        present.append("male")
    if rng.random() < 0.3:
        present.append("eyeglasses")
    if present[1] != "black" and rng.random() < 0.3:
        present.append("pale_skin")
    return vocab.from_names(n for n in present if n in vocab.names)


def _soft(sd: np.ndarray, width: float) -> np.ndarray:
    """Coverage from a signed distance (negative inside), antialiased over ``width`` px."""
    return np.clip(0.5 - sd / width, 0.0, 1.0)


def _ellipse_sd(yy, xx, cy, cx, ry, rx):
    # approximate signed distance in pixels
    r = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    return (r - 1.0) * min(ry, rx)


def _paint(canvas, mask, rgb):
    canvas *= (1.0 - mask[..., None])
    canvas += mask[..., None] * np.asarray(rgb)[None, None, :]


def render_face(latent: FaceLatent, attributes, vocab: AttributeVocabulary,
                size: tuple[int, int] = (64, 64)) -> np.ndarray:
    """Render an H x W x 3 face in [0, 1]; pure function of its inputs."""
    h, w = size
    names = {n for n, b in zip(vocab.names, attributes) if b}
    yy, xx = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    aa = max(1.0, min(h, w) / 64.0)
    canvas = np.ones((h, w, 3)) * BACKGROUND

    cx, cy = 0.5 * w, 0.55 * h
    fy, fx = latent.face_h * h, latent.face_w * w
    ethnicity = next((e for e in ETHNICITY if e in names), "white")
    skin = np.clip(np.array(SKIN_RGB[ethnicity]) + latent.skin_jitter, 0, 1)
    if "pale_skin" in names:
        skin = 0.5 * skin + 0.5 * PALE_RGB
    hair_name = next((n for n in HAIR[1:] if n in names), None)
    male = "male" in names

    if hair_name is not None and not male:
        # long hair falls behind the face
        back = _soft(_ellipse_sd(yy, xx, cy - 0.02 * h, cx, fy * 1.15, fx * 1.35), aa)
        back *= (yy < cy + 0.9 * fy)
        _paint(canvas, back, HAIR_RGB[hair_name])

    face = _soft(_ellipse_sd(yy, xx, cy, cx, fy, fx), aa)
    _paint(canvas, face, skin)

    if hair_name is not None:
        cap = _soft(_ellipse_sd(yy, xx, cy - 0.12 * h, cx, fy * 0.95, fx * 1.08), aa)
        cap *= _soft(yy - latent.hair_line * h - (0.0 if male else 0.03 * h), aa)
        _paint(canvas, cap, HAIR_RGB[hair_name])

    feature = np.array([0.12, 0.09, 0.08])
    eye_y, dx, er = latent.eye_y * h, latent.eye_dx * w, latent.eye_r * w
    brow_t = (0.018 if male else 0.011) * h
    for side in (-1.0, 1.0):
        ex = cx + side * dx
        _paint(canvas, _soft(_ellipse_sd(yy, xx, eye_y, ex, er * 0.7, er), aa), feature)
        by = eye_y - latent.brow_gap * h
        brow = _soft(np.maximum(np.abs(yy - by) - brow_t, np.abs(xx - ex) - 1.3 * er), aa)
        _paint(canvas, brow, HAIR_RGB.get(hair_name, (0.3, 0.25, 0.2)))

    nose_top, nose_bot = eye_y + 0.03 * h, eye_y + 0.03 * h + latent.nose_len * h
    nose = _soft(np.maximum(np.abs(xx - cx) - 0.012 * w,
                            np.maximum(nose_top - yy, yy - nose_bot)), aa)
    _paint(canvas, nose, 0.75 * skin)
    my, mw = latent.mouth_y * h, latent.mouth_w * w
    mouth = _soft(_ellipse_sd(yy, xx, my, cx, 0.018 * h, mw), aa)
    _paint(canvas, mouth, (0.55, 0.2, 0.2))

    if "eyeglasses" in names:
        frame = np.zeros((h, w))
        for side in (-1.0, 1.0):
            ex = cx + side * dx
            ring = np.abs(_ellipse_sd(yy, xx, eye_y, ex, er * 1.8, er * 2.0)) - 0.7 * aa
            frame = np.maximum(frame, _soft(ring, aa))
        bridge = np.maximum(np.abs(yy - eye_y) - 0.6 * aa, np.abs(xx - cx) - (dx - 2.0 * er))
        frame = np.maximum(frame, _soft(bridge, aa))
        _paint(canvas, frame, (0.05, 0.05, 0.05))
    return np.clip(canvas, 0.0, 1.0)


def synth_identities(n_identities: int, seed: int, vocab: AttributeVocabulary | None = None):
    """Deterministic (latent, attributes) per identity."""
    vocab = vocab or AttributeVocabulary()
    out = []
    for ident, child in enumerate(np.random.SeedSequence(seed).spawn(n_identities)):
        rng = np.random.default_rng(child)
        out.append((FaceLatent.sample(rng), sample_attributes(rng, vocab)))
    return out


def synth_dataset(n_identities: int, seed: int, out, size: tuple[int, int] = (64, 64),
                  xdog_params: XDoGParams | None = None,
                  vocab: AttributeVocabulary | None = None) -> DatasetManifest:
    """Render ``n_identities`` photo/xDoG-sketch pairs into ``out`` with a manifest."""
    if n_identities < 2:
        raise DomainError(f"synthetic dataset needs at least 2 identities, got {n_identities}")
    vocab = vocab or AttributeVocabulary()
    out = Path(out)
    entries = []
    for ident, (latent, att) in enumerate(synth_identities(n_identities, seed, vocab)):
        photo = render_face(latent, att, vocab, size)
        sketch = photo_to_sketch(photo, xdog_params)
        photo_rel, sketch_rel = f"photos/{ident:05d}.png", f"sketches/{ident:05d}.png"
        write_image(out / photo_rel, photo)
        write_image(out / sketch_rel, sketch)
        entries.append(ManifestEntry(photo_rel, sketch_rel, ident, tuple(int(b) for b in att)))
    manifest = DatasetManifest(entries, vocab, out)
    write_manifest(manifest, out / "manifest.csv")
    return manifest
