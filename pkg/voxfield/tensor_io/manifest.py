"""Scene manifest schema, validation and JSON round-tripping.

A manifest is one JSON object describing the cameras of a scene, the
files holding their targets, and the contraction, depth-bin and octree
settings. Paths inside the manifest are relative to the directory that
contains it.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import re
import typing as typ
from pathlib import Path

import msgspec
import msgspec.json as msjson
import numpy as np

from voxfield.errors import ManifestValidationError
from voxfield.geometry import Camera, CameraValidationError, Contraction

from .vxt import read_tensor

LOGGER = logging.getLogger(__name__)

Vector3 = tuple[float, float, float]
Row4 = tuple[float, float, float, float]
Matrix4 = tuple[Row4, Row4, Row4, Row4]
Split = typ.Literal["train", "holdout"]
TargetKind = typ.Literal[
    "rgb", "depth_sparse", "depth_dense", "feature", "semantic_mask"
]

_IDENTITY: typ.Final[Matrix4] = (
    (1.0, 0.0, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0),
    (0.0, 0.0, 1.0, 0.0),
    (0.0, 0.0, 0.0, 1.0),
)
_MISSING_FIELD = re.compile(r"missing required field `(?P<field>[^`]+)`")
_AT_PATH = re.compile(r"at `\$(?P<path>[^`]*)`")


class _ManifestStruct(
    msgspec.Struct, frozen=True, kw_only=True, forbid_unknown_fields=True
):
    """Common configuration of every manifest struct."""


class VirtualTargetSpec(_ManifestStruct, kw_only=True):
    """A translated copy of a camera with its distilled RGB and depth targets."""

    offset: Vector3
    rgb: str
    depth: str


class CameraSpec(_ManifestStruct, kw_only=True):
    """One camera entry of the manifest."""

    name: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    t_wc: Matrix4 = msgspec.field(name="T_wc", default=_IDENTITY)
    rgb: str
    depth_sparse: str | None = None
    depth_dense: str | None = None
    feature: str | None = None
    semantic_mask: str | None = None
    split: Split = "train"
    virtual: tuple[VirtualTargetSpec, ...] = ()

    def to_camera(self) -> Camera:
        """Return the validated :class:`~voxfield.geometry.Camera`."""
        return Camera(
            width=self.width,
            height=self.height,
            fx=self.fx,
            fy=self.fy,
            cx=self.cx,
            cy=self.cy,
            t_wc=np.asarray(self.t_wc, dtype=np.float64),
        )

    def target(self, kind: TargetKind) -> str | None:
        """Return the relative path of the ``kind`` target, if present."""
        return typ.cast("str | None", getattr(self, kind))


class ContractionSpec(_ManifestStruct, kw_only=True):
    """Inner range and ratio of the scene contraction."""

    p_inner: Vector3 = (50.0, 50.0, 6.4)
    alpha: float = 0.8

    def build(self) -> Contraction:
        """Return the runtime :class:`~voxfield.geometry.Contraction`."""
        return Contraction(p_inner=np.asarray(self.p_inner), alpha=self.alpha)


class BinSpec(_ManifestStruct, kw_only=True):
    """Depth range and bin counts of the two lifting stages."""

    t_near: float
    t_far: float
    depth_bins: int = msgspec.field(name="D", default=64)
    fine_bins: int = msgspec.field(name="D_fine", default=16)


class OctreeSpec(_ManifestStruct, kw_only=True):
    """Subdivision levels of the fine and coarse grids."""

    fine_level: int = 9
    coarse_level: int = 7


class OccupancySpec(_ManifestStruct, kw_only=True):
    """Region and ground truth used for occupancy evaluation."""

    roi_min: Vector3 = (-40.0, -40.0, -1.0)
    roi_max: Vector3 = (40.0, 40.0, 5.4)
    voxel_size: float = 0.4
    gt_occupancy: str | None = None
    gt_semantic: str | None = None
    foreground_classes: tuple[int, ...] = ()


class PcaSpec(_ManifestStruct, kw_only=True):
    """Files holding the feature compression mean and basis."""

    mean: str
    basis: str


class SceneManifest(_ManifestStruct, kw_only=True):
    """Validated description of a scene and its target files."""

    cameras: tuple[CameraSpec, ...]
    bins: BinSpec
    contraction: ContractionSpec = msgspec.field(default_factory=ContractionSpec)
    octree: OctreeSpec = msgspec.field(default_factory=OctreeSpec)
    occupancy: OccupancySpec | None = None
    pca: PcaSpec | None = None

    def camera(self, name: str) -> CameraSpec:
        """Return the camera called ``name``."""
        for spec in self.cameras:
            if spec.name == name:
                return spec
        known = ", ".join(spec.name for spec in self.cameras)
        message = f"no camera {name!r} (known: {known})"
        raise ManifestValidationError("cameras", message)

    def split(self, split: Split | None) -> tuple[CameraSpec, ...]:
        """Return the cameras in ``split`` (every camera for ``None``)."""
        if split is None:
            return self.cameras
        return tuple(spec for spec in self.cameras if spec.split == split)


def _field_from_decode_error(exc: msgspec.ValidationError) -> str:
    text = str(exc)
    missing = _MISSING_FIELD.search(text)
    if missing is not None:
        return missing.group("field")
    located = _AT_PATH.search(text)
    if located is None or not located.group("path"):
        return "manifest"
    leaf = located.group("path").rsplit(".", 1)[-1]
    return leaf.split("[", 1)[0] or "manifest"


def _validate_bins(bins: BinSpec) -> None:
    if bins.t_near <= 0:
        raise ManifestValidationError("t_near", "must be positive")
    if bins.t_far <= bins.t_near:
        raise ManifestValidationError(
            "t_far", f"must exceed t_near ({bins.t_far} <= {bins.t_near})"
        )
    if bins.depth_bins < 2:
        raise ManifestValidationError("D", "at least two depth bins are required")
    if bins.fine_bins < 2:
        raise ManifestValidationError("D_fine", "at least two candidates are required")


def _validate_octree(octree: OctreeSpec) -> None:
    if octree.coarse_level < 1:
        raise ManifestValidationError("coarse_level", "must be at least 1")
    if octree.fine_level <= octree.coarse_level:
        raise ManifestValidationError("fine_level", "must exceed coarse_level")
    if octree.fine_level > 20:
        raise ManifestValidationError("fine_level", "levels above 20 overflow the key")


def _validate_contraction(contraction: ContractionSpec) -> None:
    if not 0.0 < contraction.alpha < 1.0:
        message = f"must lie in (0, 1), got {contraction.alpha}"
        raise ManifestValidationError("alpha", message)
    if any(extent <= 0.0 for extent in contraction.p_inner):
        raise ManifestValidationError("p_inner", "every component must be positive")


def _validate_cameras(cameras: tuple[CameraSpec, ...]) -> None:
    if not cameras:
        raise ManifestValidationError("cameras", "at least one camera is required")
    seen: set[str] = set()
    for spec in cameras:
        if spec.name in seen:
            message = f"duplicate camera name {spec.name!r}"
            raise ManifestValidationError("name", message)
        seen.add(spec.name)
        try:
            spec.to_camera()
        except CameraValidationError as exc:
            message = f"camera {spec.name!r}: {exc}"
            raise ManifestValidationError(exc.field, message) from exc


def _validate_occupancy(occupancy: OccupancySpec | None) -> None:
    if occupancy is None:
        return
    if occupancy.voxel_size <= 0.0:
        raise ManifestValidationError("voxel_size", "must be positive")
    bounds = zip(occupancy.roi_min, occupancy.roi_max, strict=True)
    if any(lo >= hi for lo, hi in bounds):
        raise ManifestValidationError("roi_max", "must exceed roi_min on every axis")


def validate_manifest(manifest: SceneManifest) -> SceneManifest:
    """Check every manifest invariant and return ``manifest`` unchanged."""
    _validate_bins(manifest.bins)
    _validate_octree(manifest.octree)
    _validate_contraction(manifest.contraction)
    _validate_cameras(manifest.cameras)
    _validate_occupancy(manifest.occupancy)
    return manifest


def decode_manifest(data: bytes | str) -> SceneManifest:
    """Decode and validate manifest JSON ``data``."""
    try:
        manifest = msjson.decode(data, type=SceneManifest)
    except msgspec.ValidationError as exc:
        raise ManifestValidationError(_field_from_decode_error(exc), str(exc)) from exc
    except msgspec.DecodeError as exc:
        raise ManifestValidationError("manifest", f"invalid JSON: {exc}") from exc
    return validate_manifest(manifest)


def encode_manifest(manifest: SceneManifest) -> bytes:
    """Return indented JSON for ``manifest`` with every default spelled out."""
    return msjson.format(msjson.encode(manifest), indent=2) + b"\n"


def load_manifest(path: Path | str) -> SceneManifest:
    """Read and validate the manifest at ``path``."""
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        message = f"cannot read {source}: {exc.strerror}"
        raise ManifestValidationError("manifest", message) from exc
    manifest = decode_manifest(data)
    LOGGER.debug("loaded manifest %s with %d camera(s)", source, len(manifest.cameras))
    return manifest


def dump_manifest(manifest: SceneManifest, path: Path | str) -> Path:
    """Write ``manifest`` to ``path`` and return the path."""
    target = Path(path)
    target.write_bytes(encode_manifest(validate_manifest(manifest)))
    return target


@dc.dataclass(frozen=True, slots=True)
class SceneData:
    """A manifest paired with the directory its relative paths resolve from."""

    root: Path
    manifest: SceneManifest

    def resolve(self, relative: str) -> Path:
        """Return ``relative`` resolved against the manifest directory."""
        return self.root / relative

    def read(self, relative: str) -> np.ndarray:
        """Read the tensor at ``relative`` as float64."""
        return read_tensor(self.resolve(relative)).astype(np.float64)

    def read_target(self, spec: CameraSpec, kind: TargetKind) -> np.ndarray | None:
        """Read the ``kind`` target of camera ``spec`` if the manifest lists one."""
        relative = spec.target(kind)
        return None if relative is None else self.read(relative)


def open_scene(path: Path | str) -> SceneData:
    """Load the manifest at ``path`` together with its base directory."""
    source = Path(path)
    return SceneData(root=source.resolve().parent, manifest=load_manifest(source))
