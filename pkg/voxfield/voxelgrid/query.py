"""Nearest-cell density and feature queries on the dual octree."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

from voxfield.autodiff import ops

if typ.TYPE_CHECKING:
    import numpy.typing as npt

    from voxfield.autodiff.ops import Array

    from .grid import DualOctree, SparseGrid


@dc.dataclass(frozen=True, slots=True)
class CellLookup:
    """Rows of the fine and coarse cells containing a batch of points."""

    shape: tuple[int, ...]
    fine_rows: np.ndarray
    fine_found: np.ndarray
    coarse_rows: np.ndarray
    coarse_found: np.ndarray


def _locate_in(grid: SparseGrid, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return grid.lookup(grid.keys_at(points))


def locate(octree: DualOctree, s: npt.ArrayLike) -> CellLookup:
    """Find the cells containing contracted points ``s[..., 3]``."""
    points = np.asarray(s, dtype=np.float64)
    flat = points.reshape(-1, 3)
    fine_rows, fine_found = _locate_in(octree.fine, flat)
    coarse_rows, coarse_found = _locate_in(octree.coarse, flat)
    return CellLookup(
        shape=points.shape[:-1],
        fine_rows=fine_rows,
        fine_found=fine_found,
        coarse_rows=coarse_rows,
        coarse_found=coarse_found,
    )


def density_at(octree: DualOctree, lookup: CellLookup) -> Array:
    """Return the fine density, else the coarse density, else ``0``."""
    fine = ops.gather_rows(octree.fine.density, lookup.fine_rows, lookup.fine_found)
    coarse = ops.gather_rows(
        octree.coarse.density, lookup.coarse_rows, lookup.coarse_found
    )
    return ops.reshape(ops.where(lookup.fine_found, fine, coarse), lookup.shape)


def feature_at(octree: DualOctree, lookup: CellLookup) -> Array:
    """Return ``[fine || coarse]`` features, zero-filled for missing cells."""
    fine = ops.gather_rows(octree.fine.features, lookup.fine_rows, lookup.fine_found)
    coarse = ops.gather_rows(
        octree.coarse.features, lookup.coarse_rows, lookup.coarse_found
    )
    joined = ops.concat([fine, coarse], axis=-1)
    return ops.reshape(joined, (*lookup.shape, octree.feature_width))


def query_density(octree: DualOctree, s: npt.ArrayLike) -> Array:
    """Return the density at contracted points ``s[..., 3]``."""
    return density_at(octree, locate(octree, s))


def query_feature(octree: DualOctree, s: npt.ArrayLike) -> Array:
    """Return the concatenated fine and coarse features at ``s[..., 3]``."""
    return feature_at(octree, locate(octree, s))
