"""Differentiable structural similarity on grayscale images."""

from __future__ import annotations

import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import value_of
from voxfield.errors import ShapeError

if typ.TYPE_CHECKING:
    from voxfield.autodiff.ops import Array

WINDOW_SIZE: typ.Final[int] = 11
WINDOW_SIGMA: typ.Final[float] = 1.5
K1: typ.Final[float] = 0.01
K2: typ.Final[float] = 0.03
DYNAMIC_RANGE: typ.Final[float] = 1.0


def gaussian_window(
    size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA
) -> np.ndarray:
    """Return a normalised ``size x size`` Gaussian kernel."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    profile = np.exp(-(offsets**2) / (2.0 * sigma**2))
    profile /= profile.sum()
    return np.outer(profile, profile)


def grayscale(image: object) -> Array:
    """Average the channels of ``image[H, W, C]`` into ``(H, W, 1)``.

    Two-dimensional inputs are treated as single-channel images.
    """
    shape = value_of(image).shape
    if len(shape) == 2:
        return ops.reshape(image, (*shape, 1))
    height, width = shape[:2]
    return ops.reshape(ops.mean(image, axis=-1), (height, width, 1))


def ssim_map(pred: object, gt: object) -> Array:
    """Return the local SSIM of the grayscale images over valid windows."""
    pred_shape, gt_shape = value_of(pred).shape, value_of(gt).shape
    if pred_shape != gt_shape:
        raise ShapeError.mismatch("ssim inputs", gt_shape, pred_shape)
    if min(pred_shape[:2]) < WINDOW_SIZE:
        raise ShapeError.mismatch(
            "ssim image", (WINDOW_SIZE, WINDOW_SIZE), pred_shape[:2]
        )
    window = gaussian_window()
    x, y = grayscale(pred), grayscale(gt)
    mu_x, mu_y = ops.filter2d(x, window), ops.filter2d(y, window)
    mu_xx, mu_yy, mu_xy = ops.mul(mu_x, mu_x), ops.mul(mu_y, mu_y), ops.mul(mu_x, mu_y)
    var_x = ops.sub(ops.filter2d(ops.mul(x, x), window), mu_xx)
    var_y = ops.sub(ops.filter2d(ops.mul(y, y), window), mu_yy)
    cov = ops.sub(ops.filter2d(ops.mul(x, y), window), mu_xy)
    c1 = (K1 * DYNAMIC_RANGE) ** 2
    c2 = (K2 * DYNAMIC_RANGE) ** 2
    numerator = ops.mul(
        ops.add(ops.mul(mu_xy, 2.0), c1), ops.add(ops.mul(cov, 2.0), c2)
    )
    denominator = ops.mul(
        ops.add(ops.add(mu_xx, mu_yy), c1), ops.add(ops.add(var_x, var_y), c2)
    )
    return ops.div(numerator, denominator)


def structural_similarity(pred: object, gt: object) -> Array:
    """Return the mean local SSIM; ``1`` for identical images."""
    return ops.mean(ssim_map(pred, gt))
