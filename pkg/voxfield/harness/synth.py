"""Write a synthetic scene directory: manifest, targets and ground truth."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ
from pathlib import Path

import numpy as np

from voxfield.geometry import pixel_rays
from voxfield.objectives.features import PcaBasis, pca_fit
from voxfield.objectives.metrics import FREE, OTHERS
from voxfield.objectives.occupancy import voxel_centres
from voxfield.tensor_io import (
    CameraSpec,
    OccupancySpec,
    PcaSpec,
    SceneManifest,
    VirtualTargetSpec,
    dump_manifest,
    export_ppm,
    write_tensor,
)

from .intersect import NO_HIT, analytic_render, first_hit
from .rig import RigCamera, VirtualPoseSet, ring_rig
from .scene import SCENE_FILENAME, SyntheticScene, dump_scene

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    from voxfield.geometry import Camera
    from voxfield.tensor_io.manifest import Matrix4

LOGGER = logging.getLogger(__name__)

MANIFEST_FILENAME: typ.Final[str] = "manifest.json"
SPARSE_STRIDE: typ.Final[int] = 4
SPARSE_BAND: typ.Final[float] = 0.75


@dc.dataclass(frozen=True, slots=True)
class SynthOptions:
    """Which targets ``synth_scene`` writes and how."""

    feature_dim: int | None = None
    virtual: bool = True
    virtual_distance: float = 1.0
    sparse_stride: int = SPARSE_STRIDE
    sparse_band: float = SPARSE_BAND
    occupancy: bool = True
    previews: bool = True


@dc.dataclass(frozen=True, slots=True, eq=False)
class CameraTargets:
    """Analytic targets of one camera."""

    rgb: np.ndarray
    depth_dense: np.ndarray
    depth_sparse: np.ndarray
    feature: np.ndarray
    semantic: np.ndarray


def sparse_depth(
    dense: np.ndarray,
    stride: int = SPARSE_STRIDE,
    band: float = SPARSE_BAND,
) -> np.ndarray:
    """Keep every ``stride``-th row inside the central ``band`` of the image.

    Dropped pixels are ``0``, which marks them invalid.
    """
    height = dense.shape[0]
    rows = np.arange(height)
    half = 0.5 * band * height
    centre = 0.5 * (height - 1)
    keep = (rows % stride == 0) & (np.abs(rows - centre) <= half)
    return np.where(keep[:, None], dense, 0.0)


def render_targets(
    scene: SyntheticScene,
    camera: Camera,
    *,
    sparse_stride: int = SPARSE_STRIDE,
    sparse_band: float = SPARSE_BAND,
) -> CameraTargets:
    """Compute every analytic target for ``camera``.

    RGB is the exact volume-rendering integral; depth, feature and class
    come from the first surface each pixel's ray meets.
    """
    origins, directions = pixel_rays(camera)
    near, far = scene.bins.t_near, scene.bins.t_far
    integral = analytic_render(scene, origins, directions, near, far)
    distance, index = first_hit(scene, origins, directions, near)
    hit = (index != NO_HIT) & (distance <= far)
    dense = np.where(hit, distance, 0.0)
    features = np.zeros((*index.shape, scene.feature_width))
    classes = np.full(index.shape, OTHERS, dtype=np.float64)
    for position, box in enumerate(scene.boxes):
        selected = hit & (index == position)
        if scene.feature_width:
            features[selected] = np.asarray(box.feature)
        classes[selected] = box.class_id
    return CameraTargets(
        rgb=np.clip(integral.color, 0.0, 1.0),
        depth_dense=dense,
        depth_sparse=sparse_depth(dense, sparse_stride, sparse_band),
        feature=features,
        semantic=classes,
    )


def occupancy_truth(
    scene: SyntheticScene, spec: OccupancySpec
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(occupied, labels)`` over the ROI from voxel centres.

    A voxel belongs to the first dense box containing its centre; free
    voxels are labelled ``FREE``.
    """
    centres = voxel_centres(spec.roi_min, spec.roi_max, spec.voxel_size)
    labels = np.full(centres.shape[:-1], FREE, dtype=np.float64)
    for box in reversed(scene.visible_boxes()):
        labels[box.contains(centres)] = box.class_id
    return labels != FREE, labels


def _pose_rows(camera: Camera) -> Matrix4:
    rows = tuple(tuple(float(value) for value in row) for row in camera.t_wc)
    return typ.cast("Matrix4", rows)


def _camera_spec(
    entry: RigCamera,
    files: dict[str, str | None],
    virtual: tuple[VirtualTargetSpec, ...],
) -> CameraSpec:
    camera = entry.camera
    return CameraSpec(
        name=entry.name,
        width=camera.width,
        height=camera.height,
        fx=camera.fx,
        fy=camera.fy,
        cx=camera.cx,
        cy=camera.cy,
        t_wc=_pose_rows(camera),
        rgb=typ.cast("str", files["rgb"]),
        depth_sparse=files["depth_sparse"],
        depth_dense=files["depth_dense"],
        feature=files.get("feature"),
        semantic_mask=files["semantic_mask"],
        split=entry.split,
        virtual=virtual,
    )


class _Writer:
    """Writes tensors relative to the scene directory and records names."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self.written: list[str] = []

    def tensor(self, name: str, array: np.ndarray, dtype: str = "<f4") -> str:
        write_tensor(self.root / name, np.asarray(array).astype(dtype))
        self.written.append(name)
        return name


def _compress_features(
    targets: dict[str, CameraTargets], width: int
) -> tuple[dict[str, np.ndarray], PcaBasis]:
    width_in = next(iter(targets.values())).feature.shape[-1]
    samples = np.concatenate(
        [entry.feature.reshape(-1, width_in) for entry in targets.values()]
    )
    basis = pca_fit(samples, width)
    codes = {name: basis.project(entry.feature) for name, entry in targets.items()}
    return codes, basis


def _virtual_targets(
    scene: SyntheticScene,
    entry: RigCamera,
    options: SynthOptions,
    writer: _Writer,
) -> tuple[VirtualTargetSpec, ...]:
    if not options.virtual or entry.split != "train":
        return ()
    poses = VirtualPoseSet.around(entry.camera, options.virtual_distance)
    specs: list[VirtualTargetSpec] = []
    for index, (offset, camera) in enumerate(
        zip(poses.offsets, poses.cameras(), strict=True)
    ):
        targets = render_targets(scene, camera)
        stem = f"{entry.name}_virtual{index}"
        specs.append(
            VirtualTargetSpec(
                offset=offset,
                rgb=writer.tensor(f"{stem}_rgb.vxt", targets.rgb),
                depth=writer.tensor(f"{stem}_depth.vxt", targets.depth_dense),
            )
        )
    return tuple(specs)


def synth_scene(
    scene: SyntheticScene,
    directory: Path | str,
    *,
    cameras: cabc.Sequence[RigCamera] | None = None,
    options: SynthOptions | None = None,
) -> Path:
    """Write manifest, targets and ground truth for ``scene`` into ``directory``.

    Cameras default to the scene's ring rig. Returns the manifest path.
    """
    settings = SynthOptions() if options is None else options
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    rig = list(ring_rig(scene.rig) if cameras is None else cameras)
    writer = _Writer(root)
    targets = {
        entry.name: render_targets(
            scene,
            entry.camera,
            sparse_stride=settings.sparse_stride,
            sparse_band=settings.sparse_band,
        )
        for entry in rig
    }
    features = {name: entry.feature for name, entry in targets.items()}
    pca: PcaSpec | None = None
    width = scene.feature_width
    if settings.feature_dim is not None and 0 < settings.feature_dim < width:
        features, basis = _compress_features(targets, settings.feature_dim)
        pca = PcaSpec(
            mean=writer.tensor("pca_mean.vxt", basis.mean),
            basis=writer.tensor("pca_basis.vxt", basis.basis),
        )
    specs: list[CameraSpec] = []
    for entry in rig:
        target = targets[entry.name]
        name = entry.name
        files: dict[str, str | None] = {
            "rgb": writer.tensor(f"{name}_rgb.vxt", target.rgb),
            "depth_dense": writer.tensor(f"{name}_depth_dense.vxt", target.depth_dense),
            "depth_sparse": writer.tensor(
                f"{name}_depth_sparse.vxt", target.depth_sparse
            ),
            "semantic_mask": writer.tensor(f"{name}_semantic.vxt", target.semantic),
        }
        if width:
            files["feature"] = writer.tensor(f"{name}_feature.vxt", features[name])
        if settings.previews:
            export_ppm(target.rgb, root / f"{name}_rgb.ppm")
        virtual = _virtual_targets(scene, entry, settings, writer)
        specs.append(_camera_spec(entry, files, virtual))
    occupancy: OccupancySpec | None = None
    if settings.occupancy:
        occupied, labels = occupancy_truth(scene, scene.occupancy)
        occupancy = OccupancySpec(
            roi_min=scene.occupancy.roi_min,
            roi_max=scene.occupancy.roi_max,
            voxel_size=scene.occupancy.voxel_size,
            gt_occupancy=writer.tensor("gt_occupancy.vxt", occupied, "u1"),
            gt_semantic=writer.tensor("gt_semantic.vxt", labels),
            foreground_classes=scene.occupancy.foreground_classes,
        )
    manifest = SceneManifest(
        cameras=tuple(specs),
        bins=scene.bins,
        contraction=scene.contraction,
        octree=scene.octree,
        occupancy=occupancy,
        pca=pca,
    )
    dump_scene(scene, root / SCENE_FILENAME)
    path = dump_manifest(manifest, root / MANIFEST_FILENAME)
    LOGGER.info(
        "wrote scene %s: %d camera(s), %d tensor file(s)",
        path,
        len(specs),
        len(writer.written),
    )
    return path
