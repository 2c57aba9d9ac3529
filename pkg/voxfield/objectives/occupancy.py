"""Occupancy grids extracted from the octree and their semantic labels."""

from __future__ import annotations

import logging
import typing as typ

import numpy as np

from voxfield.autodiff.tape import value_of
from voxfield.errors import DomainError, ShapeError
from voxfield.geometry import contract
from voxfield.voxelgrid.query import query_density

from .metrics import FREE, OTHERS

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy.typing as npt

    from voxfield.geometry import Camera, Contraction
    from voxfield.voxelgrid.grid import DualOctree

LOGGER = logging.getLogger(__name__)

DEFAULT_THRESHOLD: typ.Final[float] = 1e-3


def voxel_centres(
    roi_min: npt.ArrayLike, roi_max: npt.ArrayLike, voxel_size: float
) -> np.ndarray:
    """Return ``(X, Y, Z, 3)`` world centres of the voxels tiling the ROI."""
    lo = np.asarray(roi_min, dtype=np.float64)
    hi = np.asarray(roi_max, dtype=np.float64)
    if voxel_size <= 0.0:
        message = f"voxel size must be positive, got {voxel_size}"
        raise DomainError(message)
    if np.any(hi <= lo):
        message = "roi_max must exceed roi_min on every axis"
        raise DomainError(message)
    counts = np.maximum(np.round((hi - lo) / voxel_size).astype(np.int64), 1)
    axes = [lo[k] + (np.arange(counts[k]) + 0.5) * voxel_size for k in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def extract_occupancy(
    octree: DualOctree,
    contraction: Contraction,
    roi_min: npt.ArrayLike,
    roi_max: npt.ArrayLike,
    voxel_size: float,
    threshold: float = DEFAULT_THRESHOLD,
) -> np.ndarray:
    """Return a boolean grid that is true where the density reaches ``threshold``."""
    centres = voxel_centres(roi_min, roi_max, voxel_size)
    density = value_of(query_density(octree, contract(contraction, centres)))
    occupied = density >= threshold
    LOGGER.debug(
        "%d of %d voxel(s) occupied at threshold %g",
        int(occupied.sum()),
        occupied.size,
        threshold,
    )
    return occupied


def semantic_occupancy(
    occupied: npt.ArrayLike,
    centres: npt.ArrayLike,
    cameras: cabc.Sequence[Camera],
    masks: cabc.Sequence[npt.ArrayLike],
    *,
    depths: cabc.Sequence[npt.ArrayLike] | None = None,
    tolerance: float = 0.0,
) -> np.ndarray:
    """Label occupied voxels with the mask class of the first camera seeing them.

    A voxel is seen when its centre projects in front of the camera and
    inside the image, and, when ``depths`` are given, its distance from the
    camera centre is at most the ray depth at that pixel plus ``tolerance``.
    Free voxels get ``FREE``; occupied voxels no camera sees get ``OTHERS``.
    """
    grid = np.asarray(occupied, dtype=bool)
    points = np.asarray(centres, dtype=np.float64)
    if points.shape != (*grid.shape, 3):
        raise ShapeError.mismatch(
            "semantic_occupancy centres", (*grid.shape, 3), points.shape
        )
    if len(masks) != len(cameras):
        message = "semantic_occupancy needs one mask per camera"
        raise ShapeError(message)
    labels = np.full(grid.shape, FREE, dtype=np.int64)
    labels[grid] = OTHERS
    pending = grid.copy()
    for index, (camera, raw_mask) in enumerate(zip(cameras, masks, strict=True)):
        mask = np.asarray(raw_mask)
        if mask.shape[:2] != (camera.height, camera.width):
            raise ShapeError.mismatch(
                "semantic mask", (camera.height, camera.width), mask.shape
            )
        u, v, z = camera.project(points)
        with np.errstate(invalid="ignore"):
            seen = pending & (z > 0.0)
            seen &= (u >= 0.0) & (u < camera.width) & (v >= 0.0) & (v < camera.height)
        cols = np.where(seen, np.floor(np.nan_to_num(u)), 0).astype(np.int64)
        rows = np.where(seen, np.floor(np.nan_to_num(v)), 0).astype(np.int64)
        if depths is not None:
            depth = np.asarray(depths[index], dtype=np.float64)
            distance = np.linalg.norm(points - camera.origin, axis=-1)
            seen &= distance <= depth[rows, cols] + tolerance
        labels[seen] = mask[rows[seen], cols[seen]].reshape(-1).astype(np.int64)
        pending &= ~seen
    LOGGER.debug("%d occupied voxel(s) unseen by every camera", int(pending.sum()))
    return labels
