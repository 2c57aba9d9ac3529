"""Ray sampling, volumetric rendering and RGB decoding."""

from __future__ import annotations

from .decoder import Decoder, DecoderMode, decode, pixel_shuffle, upsample_nearest
from .render import (
    RenderOutput,
    SamplingPlan,
    render_image,
    render_ray,
    render_rays,
    two_phase_samples,
)
from .sampling import (
    DEFAULT_IMPORTANCE_SAMPLES,
    DEFAULT_UNIFORM_SAMPLES,
    WEIGHT_FLOOR,
    RaySamples,
    cell_deltas,
    importance_draws,
    sample_importance,
    sample_uniform,
    samples_at,
)

__all__ = [
    "DEFAULT_IMPORTANCE_SAMPLES",
    "DEFAULT_UNIFORM_SAMPLES",
    "WEIGHT_FLOOR",
    "Decoder",
    "DecoderMode",
    "RaySamples",
    "RenderOutput",
    "SamplingPlan",
    "cell_deltas",
    "decode",
    "importance_draws",
    "pixel_shuffle",
    "render_image",
    "render_ray",
    "render_rays",
    "sample_importance",
    "sample_uniform",
    "samples_at",
    "two_phase_samples",
    "upsample_nearest",
]
