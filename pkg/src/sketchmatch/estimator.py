"""scikit-learn style front end for the coupled sketch/photo matcher."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .augment import AugmentConfig
from .datamodel import PairedSet
from .evaluation import (GalleryIndex, cmc_curve, embed_photos, embed_sketches, identify_all,
                         rank_k_accuracy)
from .exceptions import DimensionError
from .losses import ContrastiveConfig, LossWeights
from .network import model_fingerprint
from .training import TrainConfig, desk_augment, fit


def check_images(images, channels: int, name: str = "images") -> np.ndarray:
    """Validate an N x H x W x C image stack: finite, float64, expected channel count."""
    arr = check_array(images, allow_nd=True, ensure_2d=False, dtype=np.float64,
                      ensure_all_finite=True, input_name=name)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != channels:
        raise DimensionError(f"{name} must be N x H x W x {channels}, got shape {arr.shape}")
    return arr


def check_attributes(att, n: int, t: int) -> np.ndarray:
    arr = check_array(att, ensure_2d=True, dtype=np.float64, input_name="attributes")
    if arr.shape != (n, t):
        raise DimensionError(f"attributes must be {n} x {t}, got {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise DimensionError("attributes must be 0/1")
    return arr.astype(np.uint8)


class AttributeAssistedMatcher(BaseEstimator):
    """Coupled photo / sketch+attribute embedding trained with the joint loss.

    ``fit`` takes a :class:`~sketchmatch.datamodel.PairedSet`. After fitting,
    ``enroll`` builds a gallery from photos and ``predict`` returns the
    nearest gallery identity for each sketch probe.
    """

    def __init__(self, backbone="desk", embedding_dim=None, input_size=(32, 32),
                 learning_rate=1e-3, momentum=0.9, batch_size=8, epochs=10, margin=1.0,
                 lambda1=1.0, lambda2=1.0, use_attributes=True, augment="default",
                 seed=0, dtype="float64"):
        self.backbone = backbone
        self.embedding_dim = embedding_dim
        self.input_size = input_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.margin = margin
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.use_attributes = use_attributes
        self.augment = augment
        self.seed = seed
        self.dtype = dtype

    @classmethod
    def from_train_config(cls, cfg: TrainConfig) -> "AttributeAssistedMatcher":
        return cls(backbone=cfg.backbone, embedding_dim=cfg.embedding_dim,
                   input_size=cfg.input_size, learning_rate=cfg.learning_rate,
                   momentum=cfg.momentum, batch_size=cfg.batch_size, epochs=cfg.epochs,
                   margin=cfg.contrastive.margin, lambda1=cfg.weights.lambda1,
                   lambda2=cfg.weights.lambda2, use_attributes=cfg.use_attributes,
                   augment=cfg.augment, seed=cfg.seed, dtype=cfg.dtype)

    def train_config(self) -> TrainConfig:
        h, w = self.input_size
        augment = self.augment
        if isinstance(augment, str) and augment == "default":
            augment = desk_augment(h, w)
        elif isinstance(augment, dict):
            augment = AugmentConfig(**augment)
        return TrainConfig(
            learning_rate=self.learning_rate, momentum=self.momentum,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            weights=LossWeights(self.lambda1, self.lambda2),
            contrastive=ContrastiveConfig(self.margin), augment=augment,
            use_attributes=self.use_attributes, backbone=self.backbone,
            embedding_dim=self.embedding_dim, input_height=h, input_width=w, dtype=self.dtype,
        )

    def fit(self, X: PairedSet, y=None, init_model=None):
        cfg = self.train_config()
        check_images(X.photos, 3, "photos")
        check_images(X.sketches, 1, "sketches")
        if X.photos.shape[1:3] != tuple(self.input_size):
            raise DimensionError(
                f"images are {X.photos.shape[1:3]}, estimator expects {tuple(self.input_size)}"
            )
        state = fit(X, cfg, init_model=init_model)
        self.model_ = state.model
        self.history_ = state.history
        self.n_attributes_ = len(X.vocabulary)
        return self

    def embed_photos(self, photos) -> np.ndarray:
        check_is_fitted(self, "model_")
        return embed_photos(self.model_, check_images(photos, 3, "photos"))

    def embed_sketches(self, sketches, attributes) -> np.ndarray:
        check_is_fitted(self, "model_")
        sketches = check_images(sketches, 1, "sketches")
        attributes = check_attributes(attributes, len(sketches), self.n_attributes_)
        return embed_sketches(self.model_, sketches, attributes, self.use_attributes)

    def transform(self, X: PairedSet) -> tuple[np.ndarray, np.ndarray]:
        """(photo embeddings, sketch embeddings) for every row of ``X``."""
        return (self.embed_photos(X.photos),
                self.embed_sketches(X.sketches, X.witness_attributes))

    def enroll(self, photos, identities) -> "AttributeAssistedMatcher":
        emb = self.embed_photos(photos)
        self.gallery_ = GalleryIndex(np.asarray(identities), emb, model_fingerprint(self.model_))
        return self

    def rank(self, sketches, attributes, identities=None):
        check_is_fitted(self, "gallery_")
        sketches = check_images(sketches, 1, "sketches")
        attributes = check_attributes(attributes, len(sketches), self.n_attributes_)
        if identities is None:
            identities = np.full(len(sketches), -1)
        return identify_all(sketches, attributes, np.asarray(identities), self.gallery_,
                            self.model_, self.use_attributes)

    def predict(self, sketches, attributes) -> np.ndarray:
        """Identity of the nearest gallery photo for each sketch."""
        return np.array([r.ranked[0][0] for r in self.rank(sketches, attributes)])

    def score(self, X: PairedSet, y=None, k: int = 1) -> float:
        """Rank-k accuracy of ``X``'s sketches against the enrolled gallery (or ``X``'s photos)."""
        if not hasattr(self, "gallery_"):
            self.enroll(X.photos, X.identities)
        return rank_k_accuracy(self.rank(X.sketches, X.witness_attributes, X.identities), k)

    def cmc(self, X: PairedSet) -> np.ndarray:
        return cmc_curve(self.rank(X.sketches, X.witness_attributes, X.identities))
