"""Small synthetic scenes that fit and render quickly in tests."""

from __future__ import annotations

import typing as typ

from voxfield.harness import Box, RigSpec, SyntheticScene, validate_scene
from voxfield.tensor_io import (
    BinSpec,
    ContractionSpec,
    OccupancySpec,
    OctreeSpec,
)

WALL_COLOR: typ.Final[tuple[float, float, float]] = (0.8, 0.3, 0.2)
WALL_CLASS: typ.Final[int] = 2
WALL_FEATURE: typ.Final[tuple[float, ...]] = (1.0, -0.5, 0.25, 2.0)


def wall_scene(feature: tuple[float, ...] = ()) -> SyntheticScene:
    """Return one dense wall in front of a two-camera rig.

    Images are 24x22 pixels and render at 12x11 before decoding. The grids
    are shallow and a fit step takes well under a second.
    """
    wall = Box(
        lower=(3.0, -3.0, -1.0),
        upper=(4.0, 3.0, 1.0),
        density=20.0,
        color=WALL_COLOR,
        feature=feature,
        class_id=WALL_CLASS,
    )
    return validate_scene(
        SyntheticScene(
            boxes=(wall,),
            bins=BinSpec(t_near=0.5, t_far=8.0, depth_bins=8, fine_bins=4),
            contraction=ContractionSpec(p_inner=(4.0, 4.0, 2.0)),
            octree=OctreeSpec(fine_level=5, coarse_level=3),
            occupancy=OccupancySpec(
                roi_min=(-4.0, -4.0, -1.5),
                roi_max=(4.5, 4.0, 1.5),
                voxel_size=0.5,
                foreground_classes=(WALL_CLASS,),
            ),
            rig=RigSpec(width=24, height=22, fov=60.0, cameras=2, overlap=10.0),
        )
    )
