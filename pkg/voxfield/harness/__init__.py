"""Synthetic box scenes with analytic targets and oracles."""

from __future__ import annotations

from .intersect import (
    NO_HIT,
    AnalyticRender,
    analytic_render,
    analytic_transmittance,
    first_hit,
    slab_intersect,
)
from .rig import RigCamera, VirtualPoseSet, pinhole, ring_rig, virtual_poses, yaw_pose
from .scene import (
    SCENE_FILENAME,
    Box,
    RigSpec,
    SyntheticScene,
    desk_scene,
    dump_scene,
    load_scene,
    validate_scene,
)
from .synth import (
    MANIFEST_FILENAME,
    CameraTargets,
    SynthOptions,
    occupancy_truth,
    render_targets,
    sparse_depth,
    synth_scene,
)

__all__ = [
    "MANIFEST_FILENAME",
    "NO_HIT",
    "SCENE_FILENAME",
    "AnalyticRender",
    "Box",
    "CameraTargets",
    "RigCamera",
    "RigSpec",
    "SynthOptions",
    "SyntheticScene",
    "VirtualPoseSet",
    "analytic_render",
    "analytic_transmittance",
    "desk_scene",
    "dump_scene",
    "first_hit",
    "load_scene",
    "occupancy_truth",
    "pinhole",
    "render_targets",
    "ring_rig",
    "slab_intersect",
    "sparse_depth",
    "synth_scene",
    "validate_scene",
    "virtual_poses",
    "yaw_pose",
]
