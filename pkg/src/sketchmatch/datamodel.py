"""Samples, attribute vocabulary, dataset manifests and identity splits.

Manifest file layout (UTF-8 text)::

    {"format": "sketchmatch-manifest/1", "vocabulary": ["bald", ...]}
    photo_path,sketch_path,identity,attributes,witness_attributes
    photos/0001.png,sketches/0001.png,1,000100100000,
    ...

The first line is a JSON header declaring the attribute order; the rest is
CSV. Paths are relative to the manifest's directory. ``attributes`` is a
string of T '0'/'1' characters in vocabulary order; ``witness_attributes``
is optional and defaults to ``attributes``. A row may leave ``sketch_path``
empty for photo-only entries (gallery distractors).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .exceptions import ConfigurationError, DimensionError, IntegrityError, SchemaError

MANIFEST_FORMAT = "sketchmatch-manifest/1"
MANIFEST_COLUMNS = ("photo_path", "sketch_path", "identity", "attributes", "witness_attributes")

DEFAULT_ATTRIBUTES = (
    "bald",
    "black_hair",
    "blond_hair",
    "brown_hair",
    "gray_hair",
    "male",
    "asian",
    "indian",
    "white",
    "black",
    "eyeglasses",
    "pale_skin",
)


@dataclass(frozen=True)
class AttributeVocabulary:
    names: tuple[str, ...] = DEFAULT_ATTRIBUTES

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise SchemaError(f"duplicate attribute names in vocabulary: {self.names}")
        if not self.names:
            raise SchemaError("attribute vocabulary is empty")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def parse(self, bits: str, where: str = "") -> np.ndarray:
        """Parse a '0'/'1' string into an attribute vector."""
        bits = bits.strip()
        if len(bits) != len(self.names) or set(bits) - {"0", "1"}:
            raise SchemaError(
                f"{where}attribute string {bits!r} must be {len(self.names)} characters of 0/1"
            )
        return np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")

    def format(self, att) -> str:
        att = as_attribute_vector(att, len(self.names))
        return "".join("1" if b else "0" for b in att)

    def from_names(self, present: Iterable[str]) -> np.ndarray:
        att = np.zeros(len(self.names), dtype=np.uint8)
        for name in present:
            att[self.index(name)] = 1
        return att


def as_attribute_vector(att, length: int | None = None) -> np.ndarray:
    """Validate and return ``att`` as a uint8 0/1 vector."""
    arr = np.asarray(att)
    if arr.ndim != 1:
        raise DimensionError(f"attribute vector must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"attribute vector has length {arr.shape[0]}, expected {length}")
    if not np.all((arr == 0) | (arr == 1)):
        raise SchemaError("attribute vector entries must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass
class PhotoSample:
    image: np.ndarray  # H x W x 3, values in [0, 1]
    identity: int
    attributes: np.ndarray

    def __post_init__(self):
        _check_image(self.image, 3)
        if self.identity < 0:
            raise SchemaError(f"identity must be non-negative, got {self.identity}")
        self.attributes = as_attribute_vector(self.attributes)


@dataclass
class SketchSample:
    image: np.ndarray  # H x W x 1, values in [0, 1]
    identity: int
    attributes: np.ndarray
    witness_attributes: np.ndarray | None = None

    def __post_init__(self):
        _check_image(self.image, 1)
        if self.identity < 0:
            raise SchemaError(f"identity must be non-negative, got {self.identity}")
        self.attributes = as_attribute_vector(self.attributes)
        if self.witness_attributes is None:
            self.witness_attributes = self.attributes.copy()
        else:
            self.witness_attributes = as_attribute_vector(
                self.witness_attributes, len(self.attributes)
            )


def _check_image(image, channels):
    if not isinstance(image, np.ndarray) or image.ndim != 3 or image.shape[2] != channels:
        shape = getattr(image, "shape", None)
        raise DimensionError(f"expected H x W x {channels} image, got shape {shape}")
    if not np.all(np.isfinite(image)):
        raise DimensionError("image contains non-finite values")


@dataclass(frozen=True)
class ManifestEntry:
    photo_path: str
    sketch_path: str
    identity: int
    attributes: tuple[int, ...]
    witness_attributes: tuple[int, ...] | None = None

    @property
    def witness(self) -> tuple[int, ...]:
        return self.attributes if self.witness_attributes is None else self.witness_attributes


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    vocabulary: AttributeVocabulary = field(default_factory=AttributeVocabulary)
    root: Path = field(default=Path("."), compare=False)

    @property
    def identities(self) -> np.ndarray:
        return np.array([e.identity for e in self.entries], dtype=np.int64)

    @property
    def n_identities(self) -> int:
        return len({e.identity for e in self.entries})

    def photo_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.photo_path]

    def sketch_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.sketch_path]

    def subset(self, mask) -> "DatasetManifest":
        mask = np.asarray(mask, dtype=bool)
        entries = [e for e, keep in zip(self.entries, mask) if keep]
        return replace(self, entries=entries)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p


def load_manifest(path, require_pairs: bool = True, check_files: bool = True) -> DatasetManifest:
    """Read and validate a manifest file.

    With ``require_pairs`` every identity must have at least one photo and
    one sketch; distractor manifests pass ``require_pairs=False``.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: first line must be a JSON header ({exc})") from None
    if header.get("format") != MANIFEST_FORMAT:
        raise SchemaError(f"{path}: unsupported manifest format {header.get('format')!r}")
    vocab = AttributeVocabulary(tuple(header.get("vocabulary", DEFAULT_ATTRIBUTES)))

    reader = csv.DictReader(io.StringIO(body))
    missing = {"photo_path", "sketch_path", "identity", "attributes"} - set(reader.fieldnames or ())
    if reader.fieldnames is not None and missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")

    entries = []
    for row_idx, row in enumerate(reader):
        where = f"{path}: line {row_idx + 3} (data row {row_idx + 1}): "
        try:
            identity = int(row["identity"])
        except (TypeError, ValueError):
            raise SchemaError(f"{where}identity {row['identity']!r} is not an integer") from None
        if identity < 0:
            raise SchemaError(f"{where}identity must be non-negative")
        att = tuple(int(b) for b in vocab.parse(row["attributes"] or "", where))
        witness_raw = (row.get("witness_attributes") or "").strip()
        witness = tuple(int(b) for b in vocab.parse(witness_raw, where)) if witness_raw else None
        photo, sketch = (row["photo_path"] or "").strip(), (row["sketch_path"] or "").strip()
        if not photo and not sketch:
            raise SchemaError(f"{where}row has neither photo_path nor sketch_path")
        entries.append(ManifestEntry(photo, sketch, identity, att, witness))

    manifest = DatasetManifest(entries, vocab, path.parent)
    if require_pairs:
        _check_integrity(manifest, path)
    if check_files:
        for e in manifest.entries:
            for rel in (e.photo_path, e.sketch_path):
                if rel and not manifest.resolve(rel).is_file():
                    raise FileNotFoundError(f"{path}: referenced image not found: {rel}")
    return manifest


def _check_integrity(manifest: DatasetManifest, path) -> None:
    has_photo, has_sketch = set(), set()
    for e in manifest.entries:
        if e.photo_path:
            has_photo.add(e.identity)
        if e.sketch_path:
            has_sketch.add(e.identity)
    for ident in sorted(has_photo ^ has_sketch):
        kind = "sketch" if ident in has_photo else "photo"
        raise IntegrityError(f"{path}: identity {ident} has no {kind} entry")


def write_manifest(manifest: DatasetManifest, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vocab = manifest.vocabulary
    buf = io.StringIO()
    buf.write(json.dumps({"format": MANIFEST_FORMAT, "vocabulary": list(vocab.names)}) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for e in manifest.entries:
        witness = "" if e.witness_attributes is None else vocab.format(e.witness_attributes)
        writer.writerow(
            [e.photo_path, e.sketch_path, e.identity, vocab.format(e.attributes), witness]
        )
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def encode_attribute_channels(sketch_image: np.ndarray, att) -> np.ndarray:
    """Stack a grayscale sketch with one constant plane per attribute."""
    sketch_image = np.asarray(sketch_image)
    if sketch_image.ndim != 3 or sketch_image.shape[2] != 1:
        raise DimensionError(f"expected H x W x 1 sketch, got shape {sketch_image.shape}")
    att = np.asarray(att)
    if att.ndim != 1:
        raise DimensionError(f"attribute vector must be 1-D, got shape {att.shape}")
    h, w, _ = sketch_image.shape
    dtype = np.result_type(sketch_image.dtype, np.float32)
    out = np.empty((h, w, 1 + att.shape[0]), dtype=dtype)
    out[..., 0] = sketch_image[..., 0]
    out[..., 1:] = att.astype(dtype)[None, None, :]
    return out


def encode_attribute_batch(sketches: np.ndarray, atts: np.ndarray) -> np.ndarray:
    """Batched :func:`encode_attribute_channels`: (N,H,W,1) + (N,T) -> (N,H,W,1+T)."""
    n, h, w, _ = sketches.shape
    atts = np.asarray(atts, dtype=sketches.dtype)
    planes = np.broadcast_to(atts[:, None, None, :], (n, h, w, atts.shape[1]))
    return np.concatenate([sketches, planes], axis=-1)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )


def split_identities(identities: Sequence[int], spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return sorted (train, test) identity arrays."""
    unique = np.unique(np.asarray(identities, dtype=np.int64))
    if unique.size == 0:
        raise ConfigurationError("cannot split an empty dataset")
    n_train = int(np.floor(spec.train_fraction * unique.size + 0.5))
    if n_train < 1 or n_train >= unique.size:
        raise ConfigurationError(
            f"train_fraction {spec.train_fraction} on {unique.size} identities "
            f"leaves an empty partition"
        )
    perm = np.random.default_rng(spec.seed).permutation(unique.size)
    return np.sort(unique[perm[:n_train]]), np.sort(unique[perm[n_train:]])


def split_dataset(dataset, spec: SplitSpec):
    """Split a manifest (or any object with ``identities`` and ``subset``) by identity."""
    ids = np.asarray(dataset.identities)
    train_ids, _ = split_identities(ids, spec)
    in_train = np.isin(ids, train_ids)
    return dataset.subset(in_train), dataset.subset(~in_train)


def read_image(path, channels: int, size: tuple[int, int] | None = None) -> np.ndarray:
    """Load an 8-bit PNG as float64 in [0, 1], optionally resized to (height, width)."""
    with Image.open(path) as img:
        img = img.convert("RGB" if channels == 3 else "L")
        if size is not None and (img.height, img.width) != tuple(size):
            img = img.resize((size[1], size[0]), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr.reshape(arr.shape[0], arr.shape[1], channels)


def write_image(path, image: np.ndarray) -> None:
    """Write a [0, 1] image (H x W x 1 or H x W x 3) as an 8-bit PNG."""
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    os.makedirs(Path(path).parent, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


@dataclass
class PairedSet:
    """In-memory image arrays for the paired rows of a manifest."""

    photos: np.ndarray  # N x H x W x 3
    sketches: np.ndarray  # N x H x W x 1
    identities: np.ndarray  # N
    attributes: np.ndarray  # N x T (ground truth)
    witness_attributes: np.ndarray  # N x T (network input for sketches)
    vocabulary: AttributeVocabulary = field(default_factory=AttributeVocabulary)

    def __len__(self):
        return len(self.identities)

    def subset(self, mask) -> "PairedSet":
        idx = np.asarray(mask)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return PairedSet(
            self.photos[idx], self.sketches[idx], self.identities[idx],
            self.attributes[idx], self.witness_attributes[idx], self.vocabulary,
        )

    def photo_sample(self, i: int) -> PhotoSample:
        return PhotoSample(self.photos[i], int(self.identities[i]), self.attributes[i])

    def sketch_sample(self, i: int) -> SketchSample:
        return SketchSample(
            self.sketches[i], int(self.identities[i]), self.attributes[i],
            self.witness_attributes[i],
        )

    def photo_samples(self) -> list[PhotoSample]:
        return [self.photo_sample(i) for i in range(len(self))]

    def sketch_samples(self) -> list[SketchSample]:
        return [self.sketch_sample(i) for i in range(len(self))]


def load_paired_set(manifest: DatasetManifest, size: tuple[int, int]) -> PairedSet:
    rows = [e for e in manifest.entries if e.photo_path and e.sketch_path]
    t = len(manifest.vocabulary)
    h, w = size
    photos = np.empty((len(rows), h, w, 3))
    sketches = np.empty((len(rows), h, w, 1))
    for i, e in enumerate(rows):
        photos[i] = read_image(manifest.resolve(e.photo_path), 3, size)
        sketches[i] = read_image(manifest.resolve(e.sketch_path), 1, size)
    return PairedSet(
        photos,
        sketches,
        np.array([e.identity for e in rows], dtype=np.int64),
        np.array([e.attributes for e in rows], dtype=np.uint8).reshape(len(rows), t),
        np.array([e.witness for e in rows], dtype=np.uint8).reshape(len(rows), t),
        manifest.vocabulary,
    )


def load_photo_samples(manifest: DatasetManifest, size: tuple[int, int]) -> list[PhotoSample]:
    return [
        PhotoSample(read_image(manifest.resolve(e.photo_path), 3, size), e.identity,
                    np.array(e.attributes, dtype=np.uint8))
        for e in manifest.photo_entries()
    ]
