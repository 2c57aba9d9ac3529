"""Compare rendered views with a scene's targets."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.config import EvalConfig
from voxfield.errors import ShapeError
from voxfield.objectives.metrics import (
    SSIM_NOTE,
    MetricsReport,
    depth_metrics,
    encode_report,
    psnr,
    ssim,
)
from voxfield.tensor_io import open_scene, read_tensor

from ._shared import emit

if typ.TYPE_CHECKING:
    from pathlib import Path

    from voxfield.tensor_io.manifest import SceneData, Split

LOGGER = logging.getLogger(__name__)

_DEPTH_KIND: typ.Final[dict[str, typ.Literal["depth_sparse", "depth_dense"]]] = {
    "sparse": "depth_sparse",
    "dense": "depth_dense",
}


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``eval`` command."""

    configuration: EvalConfig = dc.field(default_factory=EvalConfig)
    depth_gt: typ.Literal["sparse", "dense"] | None = None
    split: Split | None = None
    out: Path | None = None


def _pooled_depth(
    scene: SceneData,
    predictions: Path,
    names: tuple[str, ...],
    kind: typ.Literal["depth_sparse", "depth_dense"],
) -> tuple[np.ndarray, np.ndarray] | None:
    preds: list[np.ndarray] = []
    truths: list[np.ndarray] = []
    for name in names:
        spec = scene.manifest.camera(name)
        truth = scene.read_target(spec, kind)
        if truth is None:
            continue
        pred = read_tensor(predictions / f"{name}_depth.vxt").astype(np.float64)
        if pred.shape != truth.shape:
            raise ShapeError.mismatch(f"depth of {name}", truth.shape, pred.shape)
        preds.append(pred.reshape(-1))
        truths.append(truth.reshape(-1))
    if not preds:
        return None
    return np.concatenate(preds), np.concatenate(truths)


def evaluate_views(
    manifest: Path, predictions: Path, options: Options | None = None
) -> MetricsReport:
    """Return metrics of the rendered views in ``predictions``.

    PSNR and SSIM are averaged over cameras; depth errors are pooled over
    every valid pixel of the chosen ground truth.
    """
    settings = Options() if options is None else options
    config = settings.configuration
    depth_gt = config.depth_gt if settings.depth_gt is None else settings.depth_gt
    scene = open_scene(manifest)
    names = tuple(spec.name for spec in scene.manifest.split(settings.split))
    psnrs: list[float] = []
    ssims: list[float] = []
    for name in names:
        spec = scene.manifest.camera(name)
        truth = scene.read(spec.rgb)
        pred = read_tensor(predictions / f"{name}_rgb.vxt").astype(np.float64)
        psnrs.append(psnr(pred, truth))
        ssims.append(ssim(pred, truth))
    pooled = _pooled_depth(scene, predictions, names, _DEPTH_KIND[depth_gt])
    depth = None
    if pooled is not None:
        depth = depth_metrics(*pooled, max_depth=config.max_depth)
    LOGGER.info("evaluated %d camera(s) against %s depth", len(names), depth_gt)
    return MetricsReport(
        psnr=float(np.mean(psnrs)) if psnrs else None,
        ssim=float(np.mean(ssims)) if ssims else None,
        depth=depth,
        cameras=names,
        notes=(SSIM_NOTE, f"depth ground truth: {depth_gt}"),
    )


def run(manifest: Path, predictions: Path, options: Options | None = None) -> str:
    """Evaluate ``predictions`` against ``manifest`` and emit JSON."""
    settings = Options() if options is None else options
    report = evaluate_views(manifest, predictions, settings)
    return emit(encode_report(report), settings.out)
