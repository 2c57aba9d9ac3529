"""Sparse dual-octree voxel grids: fusion, convolution and queries."""

from __future__ import annotations

from .conv import ConvStack, convolve_octree, neighbour_table, sparse_conv
from .fusion import DEFAULT_DENSITY_FLOOR, build, downsample_concat
from .grid import DualOctree, SparseGrid
from .query import (
    CellLookup,
    density_at,
    feature_at,
    locate,
    query_density,
    query_feature,
)
from .storage import load_octree, save_octree

__all__ = [
    "DEFAULT_DENSITY_FLOOR",
    "CellLookup",
    "ConvStack",
    "DualOctree",
    "SparseGrid",
    "build",
    "convolve_octree",
    "density_at",
    "downsample_concat",
    "feature_at",
    "load_octree",
    "locate",
    "neighbour_table",
    "query_density",
    "query_feature",
    "save_octree",
    "sparse_conv",
]
