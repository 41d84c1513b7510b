"""Genuine/impostor pair batches with attribute-aware impostor selection.

Every genuine (photo, sketch) pair is accompanied by four impostor
sketches: two from identities whose attribute vector equals the photo's,
two from identities whose vector differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .augment import AugmentConfig, augment_pair
from .datamodel import PairedSet, PhotoSample, SketchSample, encode_attribute_batch
from .exceptions import SamplingError
from .losses import GENUINE, IMPOSTOR

SAME_PER_GENUINE = 2
DIFF_PER_GENUINE = 2

GENUINE_TAG = "genuine"
SAME_TAG = "same_attr"
SAME_FALLBACK_TAG = "same_attr_fallback"
DIFF_TAG = "diff_attr"
DIFF_FALLBACK_TAG = "diff_attr_fallback"


class BatchArrays(NamedTuple):
    photos: np.ndarray
    sketches: np.ndarray  # attribute-encoded, N x H x W x (1 + T)
    labels: np.ndarray
    photo_attrs: np.ndarray
    sketch_attrs: np.ndarray
    photo_keys: np.ndarray
    sketch_keys: np.ndarray


@dataclass
class PairBatch:
    """Per-triple arrays; ``*_keys`` identify the source sample of each image."""

    photos: np.ndarray
    sketches: np.ndarray
    labels: np.ndarray
    photo_identities: np.ndarray
    sketch_identities: np.ndarray
    photo_attrs: np.ndarray
    sketch_attrs: np.ndarray
    witness_attrs: np.ndarray
    photo_keys: np.ndarray
    sketch_keys: np.ndarray
    provenance: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def triples(self) -> list[tuple[PhotoSample, SketchSample, int]]:
        return [
            (PhotoSample(self.photos[i], int(self.photo_identities[i]), self.photo_attrs[i]),
             SketchSample(self.sketches[i], int(self.sketch_identities[i]), self.sketch_attrs[i],
                          self.witness_attrs[i]),
             int(self.labels[i]))
            for i in range(len(self))
        ]

    def arrays(self, use_attributes: bool = True) -> BatchArrays:
        witness = self.witness_attrs if use_attributes else np.zeros_like(self.witness_attrs)
        return BatchArrays(
            self.photos, encode_attribute_batch(self.sketches, witness), self.labels,
            self.photo_attrs, self.sketch_attrs, self.photo_keys, self.sketch_keys,
        )

    def augmented(self, config: AugmentConfig, seed) -> "PairBatch":
        """Apply :func:`augment_pair` independently to every triple."""
        seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=len(self))
        photos, sketches = [], []
        for (photo, sketch, _), s in zip(self.triples, seeds):
            p, k = augment_pair(photo, sketch, config, s)
            photos.append(p.image)
            sketches.append(k.image)
        return replace(self, photos=np.stack(photos), sketches=np.stack(sketches),
                       provenance=list(self.provenance))


class ImpostorSampler:
    """Precomputed impostor candidate pools for every identity of a training set."""

    def __init__(self, train_set: PairedSet):
        self.data = train_set
        ids = np.asarray(train_set.identities)
        self.identities, first = np.unique(ids, return_index=True)
        if len(self.identities) < 2:
            raise SamplingError("impostor sampling needs at least two identities")
        self.rows_of = {int(i): np.flatnonzero(ids == i) for i in self.identities}
        # attribute signature of an identity: ground truth of its first photo
        attrs = np.asarray(train_set.attributes)[first].astype(np.int64)
        self.identity_attrs = dict(zip(self.identities.tolist(), attrs))
        hamming = np.abs(attrs[:, None, :] - attrs[None, :, :]).sum(-1)

        self.same, self.diff = {}, {}
        for k, ident in enumerate(self.identities.tolist()):
            others = np.flatnonzero(np.arange(len(self.identities)) != k)
            dist = hamming[k, others]
            exact = others[dist == 0]
            if exact.size:
                self.same[ident] = (self.identities[exact], SAME_TAG)
            else:
                nearest = others[dist == dist.min()]
                self.same[ident] = (self.identities[nearest], SAME_FALLBACK_TAG)
            differing = others[dist > 0]
            if differing.size:
                self.diff[ident] = (self.identities[differing], DIFF_TAG)
            else:
                self.diff[ident] = (self.identities[others], DIFF_FALLBACK_TAG)

    def batch(self, genuine_rows, rng: np.random.Generator) -> PairBatch:
        d = self.data
        photo_rows, sketch_rows, labels, tags = [], [], [], []
        for r in np.asarray(genuine_rows, dtype=np.int64):
            ident = int(d.identities[r])
            photo_rows.append(r)
            sketch_rows.append(r)
            labels.append(GENUINE)
            tags.append(GENUINE_TAG)
            for pool, n in ((self.same[ident], SAME_PER_GENUINE), (self.diff[ident], DIFF_PER_GENUINE)):
                candidates, tag = pool
                for other in rng.choice(candidates, size=n, replace=True):
                    rows = self.rows_of[int(other)]
                    photo_rows.append(r)
                    sketch_rows.append(int(rows[rng.integers(len(rows))]))
                    labels.append(IMPOSTOR)
                    tags.append(tag)
        pr, sr = np.array(photo_rows), np.array(sketch_rows)
        return PairBatch(
            photos=d.photos[pr], sketches=d.sketches[sr], labels=np.array(labels, dtype=np.int64),
            photo_identities=d.identities[pr], sketch_identities=d.identities[sr],
            photo_attrs=d.attributes[pr], sketch_attrs=d.attributes[sr],
            witness_attrs=d.witness_attributes[sr], photo_keys=pr, sketch_keys=sr,
            provenance=tags,
        )


def sample_pairs(train_set: PairedSet, genuine_count: int, seed,
                 sampler: ImpostorSampler | None = None) -> PairBatch:
    """Draw ``genuine_count`` genuine pairs (without replacement) plus 4 impostors each."""
    sampler = sampler or ImpostorSampler(train_set)
    if not 1 <= genuine_count <= len(train_set):
        raise SamplingError(
            f"genuine_count must be in [1, {len(train_set)}], got {genuine_count}"
        )
    rng = np.random.default_rng(seed)
    rows = rng.choice(len(train_set), size=genuine_count, replace=False)
    return sampler.batch(rows, rng)


def check_batch(batch: PairBatch, sampler: ImpostorSampler) -> list[str]:
    """Return a list of contract violations (empty when the batch is well formed)."""
    problems = []
    per = 1 + SAME_PER_GENUINE + DIFF_PER_GENUINE
    if len(batch) % per:
        problems.append(f"batch size {len(batch)} is not a multiple of {per}")
        return problems
    for g in range(0, len(batch), per):
        tags = batch.provenance[g:g + per]
        labels = batch.labels[g:g + per]
        pid = batch.photo_identities[g:g + per]
        sid = batch.sketch_identities[g:g + per]
        if tags[0] != GENUINE_TAG or labels[0] != GENUINE or pid[0] != sid[0]:
            problems.append(f"triple {g}: malformed genuine pair")
        if any(l != IMPOSTOR for l in labels[1:]) or any(pid[1:] == sid[1:]):
            problems.append(f"group {g}: impostor label or identity violation")
        same = tags[1:1 + SAME_PER_GENUINE]
        diff = tags[1 + SAME_PER_GENUINE:]
        if set(same) - {SAME_TAG, SAME_FALLBACK_TAG} or set(diff) - {DIFF_TAG, DIFF_FALLBACK_TAG}:
            problems.append(f"group {g}: wrong same/diff split {tags}")
        own = sampler.identity_attrs[int(pid[0])]
        for tag, other in zip(tags[1:], sid[1:]):
            equal = np.array_equal(sampler.identity_attrs[int(other)], own)
            if (tag == SAME_TAG and not equal) or (tag == DIFF_TAG and equal):
                problems.append(f"group {g}: impostor {other} contradicts tag {tag}")
            if tag == SAME_FALLBACK_TAG and any(
                np.array_equal(sampler.identity_attrs[int(i)], own)
                for i in sampler.identities if i != pid[0]
            ):
                problems.append(f"group {g}: fallback used although an exact match exists")
    return problems
