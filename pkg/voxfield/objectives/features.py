"""PCA compression of feature images and text-embedding similarity maps."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.autodiff.tape import value_of
from voxfield.errors import DomainError, RankError, ShapeError

if typ.TYPE_CHECKING:
    import numpy.typing as npt

LOGGER = logging.getLogger(__name__)


@dc.dataclass(frozen=True, slots=True, eq=False)
class PcaBasis:
    """Sample mean and orthonormal principal directions (one per row)."""

    mean: np.ndarray
    basis: np.ndarray
    variances: np.ndarray

    @property
    def rank(self) -> int:
        """Return the number of retained components."""
        return int(self.basis.shape[0])

    def project(self, features: npt.ArrayLike) -> np.ndarray:
        """Return ``features[..., C]`` expressed in the principal basis."""
        return pca_project(features, self.mean, self.basis)

    def reconstruct(self, codes: npt.ArrayLike) -> np.ndarray:
        """Map projected ``codes[..., k]`` back to the original space."""
        return np.asarray(codes, dtype=np.float64) @ self.basis + self.mean


def pca_fit(samples: npt.ArrayLike, k: int) -> PcaBasis:
    """Return the top-``k`` principal directions of ``samples[N, C]``.

    Components are ordered by decreasing variance and each is signed so
    its largest-magnitude entry is positive.
    """
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 2:
        raise ShapeError.mismatch("pca_fit samples", (-1, -1), data.shape)
    rows, width = data.shape
    if rows <= k:
        message = f"pca_fit needs more than {k} samples, got {rows}"
        raise RankError(message)
    if not 0 < k <= width:
        message = f"pca_fit rank must lie in [1, {width}], got {k}"
        raise RankError(message)
    mean = data.mean(axis=0)
    centred = data - mean
    covariance = centred.T @ centred / rows
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1][:k]
    basis = eigenvectors[:, order].T
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(k), pivots])
    basis *= np.where(signs == 0.0, 1.0, signs)[:, None]
    variances = np.maximum(eigenvalues[order], 0.0)
    LOGGER.debug("pca_fit kept %d of %d component(s)", k, width)
    return PcaBasis(mean=mean, basis=basis, variances=variances)


def pca_project(
    features: npt.ArrayLike, mean: npt.ArrayLike, basis: npt.ArrayLike
) -> np.ndarray:
    """Return ``(features - mean) @ basis.T`` over the last axis."""
    values = np.asarray(features, dtype=np.float64)
    directions = np.asarray(basis, dtype=np.float64)
    if values.shape[-1] != directions.shape[-1]:
        raise ShapeError.mismatch(
            "pca_project features", directions.shape[-1:], values.shape[-1:]
        )
    return (values - np.asarray(mean, dtype=np.float64)) @ directions.T


def cosine_similarity(feature_image: object, embedding: npt.ArrayLike) -> np.ndarray:
    """Return the per-pixel cosine similarity with ``embedding``.

    Pixels with a zero feature vector score ``0``.
    """
    features = value_of(feature_image)
    query = np.asarray(embedding, dtype=np.float64).reshape(-1)
    if features.shape[-1] != query.shape[0]:
        raise ShapeError.mismatch(
            "text_query embedding", features.shape[-1:], query.shape
        )
    norm = float(np.linalg.norm(query))
    if norm == 0.0:
        message = "text embedding has zero norm"
        raise DomainError(message)
    lengths = np.linalg.norm(features, axis=-1)
    safe = np.where(lengths > 0.0, lengths, 1.0)
    return np.where(lengths > 0.0, (features @ query) / (safe * norm), 0.0)


def text_query(feature_image: object, embedding: npt.ArrayLike) -> np.ndarray:
    """Return the cosine similarity map min-max normalised to ``[0, 1]``.

    A map without contrast is returned as ``0.5`` everywhere.
    """
    similarity = cosine_similarity(feature_image, embedding)
    lo, hi = float(similarity.min()), float(similarity.max())
    if hi - lo <= 0.0:
        LOGGER.debug("text_query similarity is constant; returning 0.5")
        return np.full(similarity.shape, 0.5)
    return (similarity - lo) / (hi - lo)
