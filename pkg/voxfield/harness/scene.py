"""Synthetic box scenes and their TOML descriptions.

A scene description lists axis-aligned boxes of constant density, colour,
feature and class, together with the depth bins, contraction, octree
levels, occupancy region and camera rig used when it is synthesised::

    [bins]
    t_near = 0.5
    t_far = 14.0

    [[boxes]]
    min = [3.0, -1.0, -1.5]
    max = [4.0, 1.0, 0.5]
    density = 40.0
    color = [0.8, 0.2, 0.2]
    class_id = 1
"""

from __future__ import annotations

import logging
import math
import typing as typ
from pathlib import Path

import msgspec
import numpy as np
import tomlkit
from tomlkit.exceptions import TOMLKitError

from voxfield.errors import SceneDescriptionError
from voxfield.objectives.metrics import OTHERS
from voxfield.tensor_io.manifest import (
    BinSpec,
    ContractionSpec,
    OccupancySpec,
    OctreeSpec,
)

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    from tomlkit.toml_document import TOMLDocument

LOGGER = logging.getLogger(__name__)

SCENE_FILENAME: typ.Final[str] = "scene.toml"

Vector3 = tuple[float, float, float]


class Box(msgspec.Struct, frozen=True, kw_only=True, forbid_unknown_fields=True):
    """An axis-aligned box of constant density, colour and feature."""

    lower: Vector3 = msgspec.field(name="min")
    upper: Vector3 = msgspec.field(name="max")
    density: float
    color: Vector3 = (0.5, 0.5, 0.5)
    feature: tuple[float, ...] = ()
    class_id: int = 1

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Return the minimum and maximum corners as arrays."""
        return (
            np.asarray(self.lower, dtype=np.float64),
            np.asarray(self.upper, dtype=np.float64),
        )

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Return whether each of ``points[..., 3]`` lies inside the box."""
        lo, hi = self.bounds()
        return np.all((points >= lo) & (points <= hi), axis=-1)


class RigSpec(msgspec.Struct, frozen=True, kw_only=True, forbid_unknown_fields=True):
    """Outward-facing camera ring settings."""

    width: int = 96
    height: int = 64
    fov: float = 60.0
    cameras: int = 3
    overlap: float = 10.0
    mount_height: float = 0.0
    holdout: bool = True


class SyntheticScene(
    msgspec.Struct, frozen=True, kw_only=True, forbid_unknown_fields=True
):
    """A box scene plus the settings needed to synthesise its targets."""

    boxes: tuple[Box, ...] = ()
    bins: BinSpec = msgspec.field(
        default_factory=lambda: BinSpec(t_near=0.5, t_far=14.0, depth_bins=48)
    )
    contraction: ContractionSpec = msgspec.field(
        default_factory=lambda: ContractionSpec(p_inner=(8.0, 8.0, 3.0))
    )
    octree: OctreeSpec = msgspec.field(
        default_factory=lambda: OctreeSpec(fine_level=7, coarse_level=5)
    )
    occupancy: OccupancySpec = msgspec.field(
        default_factory=lambda: OccupancySpec(
            roi_min=(-8.0, -8.0, -1.6), roi_max=(8.0, 8.0, 2.0), voxel_size=0.25
        )
    )
    rig: RigSpec = msgspec.field(default_factory=RigSpec)
    feature_dim: int | None = None

    @property
    def feature_width(self) -> int:
        """Return the per-box feature width (zero without features)."""
        if self.feature_dim is not None:
            return self.feature_dim
        return len(self.boxes[0].feature) if self.boxes else 0

    def visible_boxes(self) -> tuple[Box, ...]:
        """Return the boxes with positive density."""
        return tuple(box for box in self.boxes if box.density > 0.0)


def _validate_box(index: int, box: Box, width: int) -> None:
    context = f"boxes[{index}]"
    if any(lo >= hi for lo, hi in zip(box.lower, box.upper, strict=True)):
        raise SceneDescriptionError("max", f"{context}: min must be below max")
    if not math.isfinite(box.density) or box.density < 0.0:
        raise SceneDescriptionError("density", f"{context}: must be finite and >= 0")
    if any(not 0.0 <= channel <= 1.0 for channel in box.color):
        raise SceneDescriptionError("color", f"{context}: channels must lie in [0, 1]")
    if len(box.feature) != width:
        message = f"{context}: expected {width} feature channel(s)"
        raise SceneDescriptionError("feature", message)
    if box.class_id <= OTHERS:
        message = f"{context}: must exceed {OTHERS}, which marks unseen voxels"
        raise SceneDescriptionError("class_id", message)


def validate_scene(scene: SyntheticScene) -> SyntheticScene:
    """Check every scene invariant and return ``scene`` unchanged."""
    width = scene.feature_width
    for index, box in enumerate(scene.boxes):
        _validate_box(index, box, width)
    rig = scene.rig
    if rig.width % 2 or rig.height % 2 or rig.width <= 0 or rig.height <= 0:
        raise SceneDescriptionError("width", "rig images need positive even sizes")
    if not 0.0 < rig.fov < 180.0:
        raise SceneDescriptionError("fov", "must lie in (0, 180) degrees")
    if rig.cameras < 1:
        raise SceneDescriptionError("cameras", "at least one camera is required")
    if not 0.0 <= rig.overlap < rig.fov:
        raise SceneDescriptionError("overlap", "must lie in [0, fov)")
    if scene.bins.t_far <= scene.bins.t_near or scene.bins.t_near <= 0.0:
        raise SceneDescriptionError("t_far", "need 0 < t_near < t_far")
    return scene


def scene_from_mapping(mapping: cabc.Mapping[str, object]) -> SyntheticScene:
    """Convert a parsed description into a validated :class:`SyntheticScene`."""
    try:
        scene = msgspec.convert(mapping, type=SyntheticScene)
    except msgspec.ValidationError as exc:
        raise SceneDescriptionError("scene", str(exc)) from exc
    return validate_scene(scene)


def load_scene(path: Path | str) -> SyntheticScene:
    """Parse the TOML scene description at ``path``."""
    source = Path(path)
    try:
        document = tomlkit.parse(source.read_text(encoding="utf-8"))
    except OSError as exc:
        message = f"cannot read {source}: {exc.strerror}"
        raise SceneDescriptionError("scene", message) from exc
    except TOMLKitError as exc:
        raise SceneDescriptionError("scene", f"{source}: {exc}") from exc
    scene = scene_from_mapping(document.unwrap())
    LOGGER.debug("loaded scene %s with %d box(es)", source, len(scene.boxes))
    return scene


def _without_none(value: object) -> object:
    if isinstance(value, dict):
        return {
            key: _without_none(entry)
            for key, entry in value.items()
            if entry is not None
        }
    if isinstance(value, list):
        return [_without_none(entry) for entry in value]
    return value


def scene_document(scene: SyntheticScene) -> TOMLDocument:
    """Return a TOML document describing ``scene``.

    TOML has no null, so unset optional fields are left out.
    """
    document = tomlkit.document()
    document.add(tomlkit.comment("Synthetic voxfield scene"))
    builtins = typ.cast("dict[str, object]", _without_none(msgspec.to_builtins(scene)))
    for key, value in builtins.items():
        document[key] = value
    return document


def dump_scene(scene: SyntheticScene, path: Path | str) -> Path:
    """Write ``scene`` as TOML to ``path``."""
    target = Path(path)
    target.write_text(tomlkit.dumps(scene_document(scene)), encoding="utf-8")
    return target


def desk_scene(feature_dim: int = 0, seed: int = 0) -> SyntheticScene:
    """Return the default scene: a floor and four boxes around the rig.

    Box features are drawn from a seeded generator so every box has a
    distinct direction in feature space.
    """
    rng = np.random.default_rng(seed)
    layout = (
        ((-8.0, -8.0, -1.6), (8.0, 8.0, -1.35), (0.55, 0.5, 0.45), 1),
        ((3.5, -1.0, -1.35), (4.5, 1.0, 0.6), (0.85, 0.2, 0.2), 2),
        ((2.5, 2.5, -1.35), (3.5, 3.5, 0.2), (0.2, 0.7, 0.3), 3),
        ((2.5, -3.8, -1.35), (3.3, -2.6, 1.0), (0.2, 0.3, 0.85), 4),
        ((6.0, -5.0, -1.35), (7.0, 5.0, 1.8), (0.8, 0.75, 0.3), 5),
    )
    boxes = tuple(
        Box(
            lower=lower,
            upper=upper,
            density=40.0,
            color=color,
            feature=tuple(float(value) for value in rng.normal(size=feature_dim)),
            class_id=class_id,
        )
        for lower, upper, color, class_id in layout
    )
    return validate_scene(
        SyntheticScene(
            boxes=boxes,
            occupancy=OccupancySpec(
                roi_min=(-8.0, -8.0, -1.6),
                roi_max=(8.0, 8.0, 2.0),
                voxel_size=0.25,
                foreground_classes=(2, 3, 4, 5),
            ),
        )
    )
