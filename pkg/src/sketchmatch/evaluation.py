"""Gallery search and rank-k / CMC scoring."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .datamodel import PhotoSample, SketchSample, encode_attribute_batch
from .exceptions import DimensionError, DomainError, FingerprintMismatchError, SchemaError
from .network import CoupledModel, forward_photo, forward_sketch, model_fingerprint

GALLERY_FORMAT = "sketchmatch-gallery/1"


def embed_photos(model: CoupledModel, photos: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """N x H x W x 3 photos -> N x D float64 embeddings."""
    out = []
    with torch.no_grad():
        for start in range(0, len(photos), batch_size):
            emb, _ = forward_photo(model, photos[start:start + batch_size])
            out.append(emb.double().numpy())
    return np.concatenate(out) if out else np.zeros((0, model.photo_config.embedding_dim))


def embed_sketches(model: CoupledModel, sketches: np.ndarray, witness: np.ndarray,
                   use_attributes: bool = True, batch_size: int = 256) -> np.ndarray:
    """N x H x W x 1 sketches plus N x T witness attributes -> N x D embeddings."""
    witness = np.asarray(witness) if use_attributes else np.zeros_like(np.asarray(witness))
    out = []
    with torch.no_grad():
        for start in range(0, len(sketches), batch_size):
            enc = encode_attribute_batch(sketches[start:start + batch_size],
                                         witness[start:start + batch_size])
            emb, _ = forward_sketch(model, enc)
            out.append(emb.double().numpy())
    return np.concatenate(out) if out else np.zeros((0, model.sketch_config.embedding_dim))


@dataclass
class GalleryIndex:
    identities: np.ndarray  # M
    embeddings: np.ndarray  # M x D
    fingerprint: str = ""
    config_hash: str = ""

    def __post_init__(self):
        self.identities = np.asarray(self.identities, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or len(self.embeddings) != len(self.identities):
            raise DimensionError("gallery embeddings must be M x D with one identity per row")

    def __len__(self):
        return len(self.identities)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def merge(self, other: "GalleryIndex") -> "GalleryIndex":
        if other.fingerprint != self.fingerprint:
            raise FingerprintMismatchError(
                f"gallery fingerprints differ ({self.fingerprint} vs {other.fingerprint})"
            )
        if len(other) and other.dim != self.dim:
            raise DimensionError("gallery embedding dimensions differ")
        return GalleryIndex(np.concatenate([self.identities, other.identities]),
                            np.concatenate([self.embeddings, other.embeddings]),
                            self.fingerprint, self.config_hash)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = json.dumps({"format": GALLERY_FORMAT, "fingerprint": self.fingerprint,
                           "config_hash": self.config_hash})
        with open(path, "wb") as fh:
            np.savez(fh, identities=self.identities, embeddings=self.embeddings,
                     meta=np.array(meta))
        return path

    @classmethod
    def load(cls, path) -> "GalleryIndex":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != GALLERY_FORMAT:
                raise SchemaError(f"{path}: not a gallery file")
            return cls(z["identities"], z["embeddings"], meta["fingerprint"],
                       meta.get("config_hash", ""))


def build_gallery(photos: Sequence[PhotoSample], model: CoupledModel) -> GalleryIndex:
    if len(photos) == 0:
        raise DomainError("cannot build a gallery from an empty photo list")
    images = np.stack([p.image for p in photos])
    return GalleryIndex(np.array([p.identity for p in photos]), embed_photos(model, images),
                        model_fingerprint(model))


def extend_gallery(index: GalleryIndex, distractors: Sequence[PhotoSample],
                   model: CoupledModel) -> GalleryIndex:
    """Append distractor photos; the model must be the one that built ``index``."""
    if model_fingerprint(model) != index.fingerprint:
        raise FingerprintMismatchError("model does not match the gallery's fingerprint")
    if len(distractors) == 0:
        return GalleryIndex(index.identities.copy(), index.embeddings.copy(),
                            index.fingerprint, index.config_hash)
    return index.merge(build_gallery(distractors, model))


@dataclass
class ProbeResult:
    probe_id: int
    ranked: list[tuple[int, float]]
    rank_of_true: int | None = None


def rank_gallery(probe_embedding: np.ndarray, index: GalleryIndex, true_identity: int | None = None,
                 probe_id: int = 0) -> ProbeResult:
    """Sort gallery entries by Euclidean distance; ties keep insertion order."""
    probe_embedding = np.asarray(probe_embedding, dtype=np.float64)
    if probe_embedding.shape != (index.dim,):
        raise DimensionError(
            f"probe embedding shape {probe_embedding.shape} does not match gallery dim {index.dim}"
        )
    dist = np.sqrt(((index.embeddings - probe_embedding) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")
    ids = index.identities[order]
    rank = None
    if true_identity is not None:
        hits = np.flatnonzero(ids == true_identity)
        rank = int(hits[0]) + 1 if hits.size else None
    return ProbeResult(probe_id, list(zip(ids.tolist(), dist[order].tolist())), rank)


def identify(probe: SketchSample, index: GalleryIndex, model: CoupledModel,
             use_attributes: bool = True, probe_id: int = 0) -> ProbeResult:
    emb = embed_sketches(model, probe.image[None], probe.witness_attributes[None], use_attributes)[0]
    return rank_gallery(emb, index, probe.identity, probe_id)


def identify_all(sketches: np.ndarray, witness: np.ndarray, identities: np.ndarray,
                 index: GalleryIndex, model: CoupledModel,
                 use_attributes: bool = True) -> list[ProbeResult]:
    emb = embed_sketches(model, sketches, witness, use_attributes)
    return [rank_gallery(e, index, int(t), i) for i, (e, t) in enumerate(zip(emb, identities))]


def _ranks(results: Sequence[ProbeResult]) -> tuple[np.ndarray, int]:
    if not results:
        raise DomainError("no probe results")
    m = len(results[0].ranked)
    ranks = np.array([r.rank_of_true if r.rank_of_true is not None else m + 1 for r in results])
    return ranks, m


def rank_k_accuracy(results: Sequence[ProbeResult], k: int) -> float:
    """Fraction of probes whose true identity is within the top ``k`` matches."""
    ranks, m = _ranks(results)
    if not 1 <= k <= m:
        raise DomainError(f"k must be in [1, {m}], got {k}")
    return float(np.mean(ranks <= k))


def cmc_curve(results: Sequence[ProbeResult]) -> np.ndarray:
    """Rank-k accuracy for k = 1..M (index k-1 holds rank k)."""
    ranks, m = _ranks(results)
    counts = np.bincount(np.minimum(ranks, m + 1), minlength=m + 2)[1:m + 1]
    return np.cumsum(counts) / len(ranks)


def write_cmc_csv(curve: Sequence[float], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "accuracy"])
        for k, acc in enumerate(curve, start=1):
            w.writerow([k, repr(float(acc))])
    return path
