"""Helpers shared by the command implementations."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

from voxfield.autodiff.tape import value_of
from voxfield.renderer import render_image, upsample_nearest

if typ.TYPE_CHECKING:
    from _typeshed import DataclassInstance
    from pathlib import Path

    from voxfield.autodiff.checkpoint import Checkpoint
    from voxfield.config import RenderConfig
    from voxfield.geometry import Camera

RENDER_FACTOR: typ.Final[int] = 2

T = typ.TypeVar("T", bound="DataclassInstance")


def with_overrides(settings: T, **changes: object) -> T:
    """Return ``settings`` with every non-``None`` change applied."""
    applied = {key: value for key, value in changes.items() if value is not None}
    if not applied:
        return settings
    return dc.replace(settings, **applied)


def render_full(
    checkpoint: Checkpoint, camera: Camera, settings: RenderConfig
) -> dict[str, np.ndarray]:
    """Render ``camera`` from ``checkpoint`` at the camera's own resolution.

    The field is rendered at half resolution; RGB comes from the decoder
    and the other images are upsampled by pixel repetition.
    """
    output = render_image(
        checkpoint.octree,
        checkpoint.contraction,
        camera.scaled(1.0 / RENDER_FACTOR),
        checkpoint.sampling_plan(settings.n_uniform, settings.n_importance),
        checkpoint.decoder,
        workers=settings.workers,
    )
    return {
        "rgb": value_of(output.rgb_image),
        "depth": value_of(upsample_nearest(output.depth_image, RENDER_FACTOR)),
        "opacity": value_of(upsample_nearest(output.opacity_image, RENDER_FACTOR)),
        "feature": value_of(upsample_nearest(output.feature_image, RENDER_FACTOR)),
    }


def emit(payload: bytes, out: Path | None) -> str:
    """Write ``payload`` to ``out`` or return it for printing."""
    if out is None:
        return payload.decode("utf-8").rstrip("\n")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(payload)
    return f"Wrote {out}"
