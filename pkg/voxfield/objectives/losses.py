"""Training losses and their weighted combination."""

from __future__ import annotations

import dataclasses as dc
import logging
import math
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import value_of
from voxfield.errors import DomainError, EmptyMaskError, NumericalError, ShapeError

from .similarity import structural_similarity

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy.typing as npt

    from voxfield.autodiff.ops import Array

LOGGER = logging.getLogger(__name__)

OPACITY_EPSILON: typ.Final[float] = 1e-6
COMPONENTS: typ.Final[tuple[str, ...]] = ("rgb", "depth", "density", "nerf", "found")


@dc.dataclass(frozen=True, slots=True)
class LossWeights:
    """Coefficients of the combined objective."""

    w_rgb: float = 1.0
    w_ssim: float = 0.1
    w_depth: float = 1.0
    w_density: float = 0.01
    w_nerf: float = 1.0
    w_found: float = 1.0

    def __post_init__(self) -> None:
        """Reject negative coefficients."""
        for field in dc.fields(self):
            value = getattr(self, field.name)
            if not value >= 0.0:
                message = f"loss weight {field.name} must be >= 0, got {value}"
                raise DomainError(message)

    def weight_for(self, component: str) -> float:
        """Return the coefficient applied to ``component``."""
        return float(getattr(self, f"w_{component}"))


@dc.dataclass(frozen=True, slots=True)
class LossReport:
    """Scalar loss components for one step and the graph of their sum."""

    l_rgb: float
    l_depth: float
    l_density: float
    l_nerf: float
    l_found: float
    total: float
    objective: object = dc.field(default=None, repr=False, compare=False)

    def as_row(self) -> tuple[float, ...]:
        """Return the components in history-file column order."""
        return (
            self.l_rgb,
            self.l_depth,
            self.l_density,
            self.l_nerf,
            self.l_found,
            self.total,
        )


def _require_same_shape(what: str, pred: object, gt: object) -> None:
    pred_shape, gt_shape = value_of(pred).shape, value_of(gt).shape
    if pred_shape != gt_shape:
        raise ShapeError.mismatch(what, gt_shape, pred_shape)


def mean_absolute_error(pred: object, gt: object) -> Array:
    """Return ``mean |pred - gt|``."""
    _require_same_shape("mean_absolute_error", pred, gt)
    return ops.mean(ops.abs_(ops.sub(pred, gt)))


def loss_rgb(pred: object, gt: object, w_ssim: float = 0.1) -> Array:
    """Return ``L1 + w_ssim * (1 - SSIM)`` between RGB images."""
    loss = mean_absolute_error(pred, gt)
    if w_ssim > 0.0:
        dissimilarity = ops.sub(1.0, structural_similarity(pred, gt))
        loss = ops.add(loss, ops.mul(dissimilarity, w_ssim))
    return loss


def loss_depth(
    pred: object, gt: object, valid_mask: npt.ArrayLike | None = None
) -> Array:
    """Return the masked mean of ``(|e| + e**2) / max_gt`` with ``e = gt - pred``.

    ``max_gt`` is the largest target depth inside the mask.
    """
    _require_same_shape("loss_depth", pred, gt)
    target = value_of(gt)
    mask = (
        np.ones(target.shape, dtype=bool)
        if valid_mask is None
        else np.asarray(valid_mask, dtype=bool)
    )
    if mask.shape != target.shape:
        raise ShapeError.mismatch("loss_depth mask", target.shape, mask.shape)
    if not mask.any():
        raise EmptyMaskError("loss_depth")
    index = np.nonzero(mask)
    scale = float(target[index].max())
    if scale <= 0.0:
        message = "loss_depth needs a positive target depth inside the mask"
        raise DomainError(message)
    error = ops.sub(target[index], ops.getitem(pred, index))
    penalty = ops.add(ops.abs_(error), ops.mul(error, error))
    return ops.div(ops.mean(penalty), scale)


def loss_density_entropy(opacity: object) -> Array:
    """Return the binary cross-entropy of ray opacity against one."""
    clamped = ops.clip(opacity, OPACITY_EPSILON, 1.0 - OPACITY_EPSILON)
    return ops.neg(ops.mean(ops.log(clamped)))


def loss_feature(pred: object, gt: object) -> Array:
    """Return the L1 distance between rendered and target feature images."""
    return mean_absolute_error(pred, gt)


@dc.dataclass(frozen=True, slots=True, eq=False)
class VirtualView:
    """A render from a translated camera and the offline targets for it."""

    rgb: object
    depth: object
    target_rgb: np.ndarray
    target_depth: np.ndarray


def loss_nerf_distill(
    pred_depth: object,
    nerf_depth: npt.ArrayLike,
    virtual_views: cabc.Sequence[VirtualView] = (),
    w_ssim: float = 0.1,
) -> Array:
    """Return the distillation loss from dense depth and virtual views.

    The dense-depth term covers every pixel. Each virtual view adds its RGB
    and depth losses; those per-view sums are averaged before being added.
    """
    dense = np.asarray(nerf_depth, dtype=np.float64)
    loss = loss_depth(pred_depth, dense)
    if not virtual_views:
        return loss
    per_view = [
        ops.add(
            loss_rgb(view.rgb, view.target_rgb, w_ssim),
            loss_depth(view.depth, view.target_depth, view.target_depth > 0.0),
        )
        for view in virtual_views
    ]
    stacked = ops.concat([ops.reshape(term, (1,)) for term in per_view], axis=0)
    return ops.add(loss, ops.mean(stacked))


def total_loss(
    components: cabc.Mapping[str, object], weights: LossWeights
) -> LossReport:
    """Return the weighted sum of ``components`` as a :class:`LossReport`.

    Keys are ``rgb``, ``depth``, ``density``, ``nerf`` and ``found``;
    missing keys contribute zero.
    """
    unknown = sorted(set(components) - set(COMPONENTS))
    if unknown:
        message = f"unknown loss component(s): {', '.join(unknown)}"
        raise DomainError(message)
    scalars: dict[str, float] = {}
    objective: object = np.zeros(())
    for name in COMPONENTS:
        term = components.get(name)
        if term is None:
            scalars[name] = 0.0
            continue
        value = float(value_of(term).reshape(()))
        if not math.isfinite(value):
            message = f"loss component {name} is {value}"
            raise NumericalError(message, op="total_loss")
        scalars[name] = value
        objective = ops.add(objective, ops.mul(term, weights.weight_for(name)))
    total = sum(scalars[name] * weights.weight_for(name) for name in COMPONENTS)
    return LossReport(
        l_rgb=scalars["rgb"],
        l_depth=scalars["depth"],
        l_density=scalars["density"],
        l_nerf=scalars["nerf"],
        l_found=scalars["found"],
        total=float(total),
        objective=objective,
    )
