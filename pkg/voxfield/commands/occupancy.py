"""Occupancy extraction and IoU evaluation command."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.autodiff.checkpoint import load_checkpoint
from voxfield.config import EvalConfig
from voxfield.errors import ManifestValidationError
from voxfield.objectives.metrics import (
    FREE,
    OTHERS,
    MetricsReport,
    encode_report,
    iou_suite,
)
from voxfield.objectives.occupancy import (
    extract_occupancy,
    semantic_occupancy,
    voxel_centres,
)
from voxfield.tensor_io import open_scene, write_tensor

from ._shared import emit

if typ.TYPE_CHECKING:
    from pathlib import Path

    from voxfield.tensor_io.manifest import OccupancySpec, SceneData

LOGGER = logging.getLogger(__name__)


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``occupancy`` command."""

    configuration: EvalConfig = dc.field(default_factory=EvalConfig)
    threshold: float | None = None
    out: Path | None = None


def _labels(
    scene: SceneData, occupied: np.ndarray, centres: np.ndarray, voxel_size: float
) -> np.ndarray:
    specs = [spec for spec in scene.manifest.cameras if spec.semantic_mask]
    masks = [scene.read_target(spec, "semantic_mask") for spec in specs]
    depths = [scene.read_target(spec, "depth_dense") for spec in specs]
    return semantic_occupancy(
        occupied,
        centres,
        [spec.to_camera() for spec in specs],
        [mask for mask in masks if mask is not None],
        depths=None if any(depth is None for depth in depths) else depths,
        tolerance=voxel_size,
    )


def _ground_truth(scene: SceneData, block: OccupancySpec) -> np.ndarray | None:
    if block.gt_semantic is not None:
        return np.rint(scene.read(block.gt_semantic)).astype(np.int64)
    if block.gt_occupancy is not None:
        occupied = scene.read(block.gt_occupancy) > 0.0
        return np.where(occupied, OTHERS, FREE)
    return None


def run(
    checkpoint: Path,
    manifest: Path,
    output: Path,
    options: Options | None = None,
) -> str:
    """Extract occupancy from ``checkpoint`` and score it against the scene."""
    settings = Options() if options is None else options
    threshold = (
        settings.configuration.occupancy_threshold
        if settings.threshold is None
        else settings.threshold
    )
    model = load_checkpoint(checkpoint)
    scene = open_scene(manifest)
    block = scene.manifest.occupancy
    if block is None:
        message = "the manifest has no occupancy block"
        raise ManifestValidationError("occupancy", message)
    occupied = extract_occupancy(
        model.octree,
        model.contraction,
        block.roi_min,
        block.roi_max,
        block.voxel_size,
        threshold,
    )
    centres = voxel_centres(block.roi_min, block.roi_max, block.voxel_size)
    labels = _labels(scene, occupied, centres, block.voxel_size)
    output.mkdir(parents=True, exist_ok=True)
    write_tensor(output / "pred_occupancy.vxt", occupied.astype("u1"))
    write_tensor(output / "pred_semantic.vxt", labels.astype("<f4"))
    truth = _ground_truth(scene, block)
    report = MetricsReport(
        occupancy=None
        if truth is None
        else iou_suite(labels, truth, block.foreground_classes),
        notes=(f"density threshold {threshold:g}",),
    )
    LOGGER.info(
        "%d of %d voxel(s) occupied", int(occupied.sum()), int(occupied.size)
    )
    return emit(encode_report(report), settings.out)
