"""Octree serialization into ``.vxt``-backed archives."""

from __future__ import annotations

import typing as typ

import msgspec
import numpy as np

from voxfield.autodiff.tape import value_of
from voxfield.errors import CheckpointError
from voxfield.tensor_io.archive import read_archive, write_archive

from . import morton
from .grid import DualOctree, SparseGrid

if typ.TYPE_CHECKING:
    from collections import abc as cabc
    from pathlib import Path

ARCHIVE_KIND: typ.Final[str] = "octree"
_GRIDS: typ.Final[tuple[str, str]] = ("fine", "coarse")


class OctreeLevels(msgspec.Struct, frozen=True, kw_only=True):
    """Subdivision levels stored alongside octree tensors."""

    fine_level: int
    coarse_level: int


def octree_tensors(octree: DualOctree, prefix: str = "octree") -> dict[str, np.ndarray]:
    """Return the arrays describing ``octree`` keyed by ``prefix.grid.field``.

    Cell coordinates and counts are stored as float64, which represents
    them exactly; payloads are stored as float32.
    """
    tensors: dict[str, np.ndarray] = {}
    for name in _GRIDS:
        grid: SparseGrid = getattr(octree, name)
        base = f"{prefix}.{name}"
        tensors[f"{base}.cells"] = grid.cells().astype(np.float64).reshape(-1, 3)
        tensors[f"{base}.features"] = value_of(grid.features).astype(np.float32)
        tensors[f"{base}.density"] = value_of(grid.density).astype(np.float32)
        tensors[f"{base}.count"] = grid.count.astype(np.float64)
    return tensors


def _grid_from(
    tensors: cabc.Mapping[str, np.ndarray], base: str, level: int
) -> SparseGrid:
    try:
        cells = tensors[f"{base}.cells"].astype(np.int64).reshape(-1, 3)
        features = tensors[f"{base}.features"].astype(np.float64)
        density = tensors[f"{base}.density"].astype(np.float64).reshape(-1)
        count = tensors[f"{base}.count"].astype(np.int64).reshape(-1)
    except KeyError as exc:
        message = f"octree tensor {exc.args[0]!r} is missing"
        raise CheckpointError(message) from exc
    keys = morton.encode(cells)
    order = np.argsort(keys, kind="stable")
    if features.ndim != 2:
        features = features.reshape(cells.shape[0], -1)
    return SparseGrid(
        level=level,
        keys=keys[order],
        features=features[order],
        density=density[order],
        count=count[order],
    )


def octree_from_tensors(
    tensors: cabc.Mapping[str, np.ndarray],
    levels: OctreeLevels,
    prefix: str = "octree",
) -> DualOctree:
    """Rebuild an octree from :func:`octree_tensors` output."""
    return DualOctree(
        fine=_grid_from(tensors, f"{prefix}.fine", levels.fine_level),
        coarse=_grid_from(tensors, f"{prefix}.coarse", levels.coarse_level),
    )


def save_octree(octree: DualOctree, directory: Path | str) -> Path:
    """Write ``octree`` as a standalone archive."""
    levels = OctreeLevels(
        fine_level=octree.fine.level, coarse_level=octree.coarse.level
    )
    return write_archive(
        directory, kind=ARCHIVE_KIND, metadata=levels, tensors=octree_tensors(octree)
    )


def load_octree(directory: Path | str) -> DualOctree:
    """Read an archive written by :func:`save_octree`."""
    levels, tensors = read_archive(
        directory, kind=ARCHIVE_KIND, metadata_type=OctreeLevels
    )
    return octree_from_tensors(tensors, levels)
