"""Average-pool fusion of lifted points into the dual octree."""

from __future__ import annotations

import logging
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import value_of
from voxfield.errors import ValidationError
from voxfield.geometry import contract, grid_coords

from . import morton
from .grid import DualOctree, SparseGrid

if typ.TYPE_CHECKING:
    from voxfield.frustum import LiftedPoints
    from voxfield.geometry import Contraction

LOGGER = logging.getLogger(__name__)

DEFAULT_DENSITY_FLOOR: typ.Final[float] = 1e-8


def _pool(
    level: int,
    keys: np.ndarray,
    features: object,
    densities: object,
    pattern: SparseGrid | None,
) -> SparseGrid:
    """Average the rows sharing a key, into new cells or a fixed ``pattern``."""
    if pattern is None:
        cell_keys, segments = np.unique(keys, return_inverse=True)
        segments = segments.reshape(-1)
        kept = np.arange(keys.shape[0])
    else:
        rows, found = pattern.lookup(keys)
        cell_keys = pattern.keys
        segments = rows[found]
        kept = np.flatnonzero(found)
        if kept.size < keys.shape[0]:
            LOGGER.debug(
                "dropped %d point(s) outside the level-%d pattern",
                keys.shape[0] - kept.size,
                level,
            )
    cells = cell_keys.shape[0]
    if kept.size < keys.shape[0]:
        features = ops.getitem(features, kept)
        densities = ops.getitem(densities, kept)
    return SparseGrid(
        level=level,
        keys=cell_keys,
        features=ops.segment_mean(features, segments, cells),
        density=ops.segment_mean(densities, segments, cells),
        count=np.bincount(segments, minlength=cells).astype(np.int64),
    )


def build(
    points: LiftedPoints,
    contraction: Contraction,
    fine_level: int = 9,
    coarse_level: int = 7,
    density_floor: float = DEFAULT_DENSITY_FLOOR,
    *,
    pattern: DualOctree | None = None,
) -> DualOctree:
    """Fuse ``points`` into fine and coarse grids by per-cell averaging.

    Points whose density is at or below ``density_floor`` are dropped. With
    a ``pattern`` the occupied cells are taken from it instead of from the
    points; pattern cells that receive no point get zero payload and count.
    """
    if fine_level <= coarse_level:
        message = f"fine level {fine_level} must exceed coarse level {coarse_level}"
        raise ValidationError(message)
    if pattern is not None and (
        pattern.fine.level != fine_level or pattern.coarse.level != coarse_level
    ):
        message = "pattern levels differ from the requested levels"
        raise ValidationError(message)
    keep = np.flatnonzero(value_of(points.densities) > density_floor)
    features: object = points.features
    densities: object = points.densities
    if keep.size < len(points):
        features = ops.getitem(features, keep)
        densities = ops.getitem(densities, keep)
    s = contract(contraction, points.positions[keep])
    grids = [
        _pool(
            level,
            morton.encode(grid_coords(s, level)),
            features,
            densities,
            None if pattern is None else getattr(pattern, name),
        )
        for name, level in (("fine", fine_level), ("coarse", coarse_level))
    ]
    octree = DualOctree(fine=grids[0], coarse=grids[1])
    LOGGER.debug(
        "fused %d of %d point(s) into %d fine and %d coarse cell(s)",
        keep.size,
        len(points),
        len(octree.fine),
        len(octree.coarse),
    )
    return octree


def downsample_concat(octree: DualOctree) -> DualOctree:
    """Pool fine cells to the coarse level and append them to coarse features.

    Every coarse cell's feature becomes ``[coarse || pooled_fine]`` with zero
    fill on either side. Coarse cells created by pooling take the pooled
    fine density and the summed fine counts. The fine grid is unchanged.
    """
    fine, coarse = octree.fine, octree.coarse
    shift = fine.level - coarse.level
    parents = morton.encode(fine.cells() >> shift)
    keys = np.union1d(coarse.keys, parents).astype(np.uint64)
    cells = keys.shape[0]
    merged = SparseGrid(
        level=coarse.level,
        keys=keys,
        features=np.zeros((cells, 0)),
        density=np.zeros(cells),
        count=np.zeros(cells, dtype=np.int64),
    )
    source, present = coarse.lookup(keys)
    parent_rows, _ = merged.lookup(parents)
    pooled_features = ops.segment_mean(fine.features, parent_rows, cells)
    pooled_density = ops.segment_mean(fine.density, parent_rows, cells)
    fine_counts = np.bincount(parent_rows, weights=fine.count, minlength=cells)
    features = ops.concat(
        [ops.gather_rows(coarse.features, source, present), pooled_features], axis=-1
    )
    density = ops.where(
        present, ops.gather_rows(coarse.density, source, present), pooled_density
    )
    kept_counts = coarse.count[source] if len(coarse) else 0
    count = np.where(present, kept_counts, fine_counts.astype(np.int64))
    return DualOctree(
        fine=fine,
        coarse=SparseGrid(
            level=coarse.level,
            keys=keys,
            features=features,
            density=density,
            count=count,
        ),
    )
