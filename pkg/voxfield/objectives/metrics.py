"""Evaluation metrics for images, depth maps and semantic occupancy."""

from __future__ import annotations

import math
import typing as typ

import msgspec
import msgspec.json as msjson
import numpy as np

from voxfield.autodiff.tape import value_of
from voxfield.errors import EmptyMaskError, ShapeError

from .similarity import structural_similarity

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy.typing as npt

PSNR_CAP: typ.Final[float] = 99.0
DEFAULT_MAX_DEPTH: typ.Final[float] = 80.0
MIN_PREDICTED_DEPTH: typ.Final[float] = 1e-3
DELTA_BASE: typ.Final[float] = 1.25
FREE: typ.Final[int] = -1
OTHERS: typ.Final[int] = 0
SSIM_NOTE: typ.Final[str] = (
    "perceptual image loss replaced by w_ssim * (1 - SSIM); no learned metric"
)


class DepthMetrics(msgspec.Struct, frozen=True, kw_only=True):
    """Standard monocular depth errors and threshold accuracies."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixels: int


class IoUReport(msgspec.Struct, frozen=True, kw_only=True):
    """Occupancy and per-class intersection over union."""

    iou_binary: float
    per_class: dict[int, float]
    miou: float
    f_miou: float


class MetricsReport(msgspec.Struct, frozen=True, kw_only=True, omit_defaults=True):
    """Evaluation summary emitted as JSON by the ``eval`` command."""

    psnr: float | None = None
    ssim: float | None = None
    depth: DepthMetrics | None = None
    occupancy: IoUReport | None = None
    cameras: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()


def _pair(pred: object, gt: object, what: str) -> tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(value_of(pred), dtype=np.float64)
    target = np.asarray(value_of(gt), dtype=np.float64)
    if predicted.shape != target.shape:
        raise ShapeError.mismatch(what, target.shape, predicted.shape)
    return predicted, target


def psnr(pred: object, gt: object, peak: float = 1.0) -> float:
    """Return the peak signal-to-noise ratio in dB, capped at ``PSNR_CAP``."""
    predicted, target = _pair(pred, gt, "psnr")
    mse = float(np.mean((predicted - target) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def ssim(pred: object, gt: object) -> float:
    """Return the mean SSIM of the grayscale images."""
    predicted, target = _pair(pred, gt, "ssim")
    return float(structural_similarity(predicted, target))


def depth_metrics(
    pred: object,
    gt: object,
    valid_mask: npt.ArrayLike | None = None,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> DepthMetrics:
    """Compare depth maps over valid pixels whose target lies in ``(0, max_depth]``.

    Predictions are floored at ``MIN_PREDICTED_DEPTH`` so the log error
    stays finite.
    """
    predicted, target = _pair(pred, gt, "depth_metrics")
    mask = (target > 0.0) & (target <= max_depth)
    if valid_mask is not None:
        extra = np.asarray(valid_mask, dtype=bool)
        if extra.shape != target.shape:
            raise ShapeError.mismatch("depth_metrics mask", target.shape, extra.shape)
        mask &= extra
    if not mask.any():
        raise EmptyMaskError("depth_metrics")
    truth = target[mask]
    estimate = np.maximum(predicted[mask], MIN_PREDICTED_DEPTH)
    error = estimate - truth
    ratio = np.maximum(estimate / truth, truth / estimate)
    deltas = [float(np.mean(ratio < DELTA_BASE**power)) for power in (1, 2, 3)]
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(error) / truth)),
        sq_rel=float(np.mean(error**2 / truth)),
        rmse=float(np.sqrt(np.mean(error**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(estimate) - np.log(truth)) ** 2))),
        delta1=deltas[0],
        delta2=deltas[1],
        delta3=deltas[2],
        pixels=int(mask.sum()),
    )


def _iou(pred: np.ndarray, gt: np.ndarray) -> float | None:
    union = int(np.count_nonzero(pred | gt))
    if union == 0:
        return None
    return int(np.count_nonzero(pred & gt)) / union


def _average(values: cabc.Iterable[float]) -> float:
    collected = list(values)
    return float(np.mean(collected)) if collected else 1.0


def iou_suite(
    pred_classes: npt.ArrayLike,
    gt_classes: npt.ArrayLike,
    foreground: cabc.Iterable[int] = (),
) -> IoUReport:
    """Return binary, per-class, mean and foreground-mean IoU.

    Cells equal to ``FREE`` are empty; every other value is an occupied
    cell of that class. Classes absent from both grids are left out of the
    means; a mean over no classes is ``1.0``.
    """
    pred = np.asarray(pred_classes, dtype=np.int64)
    gt = np.asarray(gt_classes, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ShapeError.mismatch("iou_suite", gt.shape, pred.shape)
    binary = _iou(pred != FREE, gt != FREE)
    classes = sorted(set(np.unique(pred).tolist()) | set(np.unique(gt).tolist()))
    per_class: dict[int, float] = {}
    for label in classes:
        if label == FREE:
            continue
        score = _iou(pred == label, gt == label)
        if score is not None:
            per_class[int(label)] = score
    wanted = set(foreground)
    return IoUReport(
        iou_binary=1.0 if binary is None else binary,
        per_class=per_class,
        miou=_average(per_class.values()),
        f_miou=_average(
            score for label, score in per_class.items() if label in wanted
        ),
    )


def encode_report(report: MetricsReport) -> bytes:
    """Return ``report`` as indented JSON with a trailing newline."""
    return msjson.format(msjson.encode(report), indent=2) + b"\n"
