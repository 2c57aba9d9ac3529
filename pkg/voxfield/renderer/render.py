"""Volumetric rendering of feature, depth and opacity images."""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import active_tape, value_of
from voxfield.frustum import occupancy_weights
from voxfield.geometry import Ray, pixel_rays
from voxfield.voxelgrid.query import density_at, feature_at, locate

from .decoder import Decoder, decode
from .sampling import (
    DEFAULT_IMPORTANCE_SAMPLES,
    DEFAULT_UNIFORM_SAMPLES,
    RaySamples,
    sample_importance,
    sample_uniform,
)

if typ.TYPE_CHECKING:
    from voxfield.autodiff.ops import Array
    from voxfield.geometry import Camera, Contraction
    from voxfield.voxelgrid.grid import DualOctree

LOGGER = logging.getLogger(__name__)

DEFAULT_CHUNK_ROWS: typ.Final[int] = 8


@dc.dataclass(frozen=True, slots=True, eq=False)
class RenderOutput:
    """Images produced for one camera."""

    feature_image: Array
    depth_image: Array
    opacity_image: Array
    rgb_image: Array

    def to_tensors(self) -> dict[str, np.ndarray]:
        """Return float32 copies keyed by image name."""
        return {
            "feature": value_of(self.feature_image).astype(np.float32),
            "depth": value_of(self.depth_image).astype(np.float32),
            "opacity": value_of(self.opacity_image).astype(np.float32),
            "rgb": value_of(self.rgb_image).astype(np.float32),
        }


@dc.dataclass(frozen=True, slots=True)
class SamplingPlan:
    """Depth range and sample counts shared by every ray of a render."""

    t_near: float
    t_far: float
    uniform_samples: int = DEFAULT_UNIFORM_SAMPLES
    importance_samples: int = DEFAULT_IMPORTANCE_SAMPLES
    jitter: bool = False
    linear: bool = False


def render_rays(
    octree: DualOctree, samples: RaySamples
) -> tuple[Array, Array, Array]:
    """Composite ``samples`` through ``octree``.

    Returns ``(feature, depth, opacity)`` with the batch shape of the
    samples; ``feature`` carries a trailing channel axis.
    """
    lookup = locate(octree, samples.positions)
    sigma = density_at(octree, lookup)
    features = feature_at(octree, lookup)
    weights = occupancy_weights(sigma, samples.deltas)
    shape = value_of(weights).shape
    feature = ops.sum_(ops.mul(ops.reshape(weights, (*shape, 1)), features), axis=-2)
    depth = ops.sum_(ops.mul(weights, samples.t_values), axis=-1)
    opacity = ops.sum_(weights, axis=-1)
    return feature, depth, opacity


def render_ray(
    octree: DualOctree, samples: RaySamples
) -> tuple[Array, Array, Array]:
    """Composite the samples of a single ray; see :func:`render_rays`."""
    return render_rays(octree, samples)


def two_phase_samples(
    octree: DualOctree,
    contraction: Contraction,
    ray: Ray,
    plan: SamplingPlan,
    rng: np.random.Generator | None = None,
) -> RaySamples:
    """Draw uniform samples, then importance samples from their weights.

    The importance phase sees detached densities so sample placement never
    carries gradients.
    """
    coarse = sample_uniform(
        ray,
        contraction,
        plan.t_near,
        plan.t_far,
        plan.uniform_samples,
        jitter=plan.jitter,
        rng=rng,
        linear=plan.linear,
    )
    sigma = ops.detach(density_at(octree, locate(octree, coarse.positions)))
    weights = value_of(occupancy_weights(sigma, coarse.deltas))
    return sample_importance(
        ray,
        contraction,
        coarse,
        weights,
        plan.importance_samples,
        t_near=plan.t_near,
        t_far=plan.t_far,
        rng=rng if plan.jitter else None,
    )


def _render_rows(
    octree: DualOctree,
    contraction: Contraction,
    origins: np.ndarray,
    directions: np.ndarray,
    plan: SamplingPlan,
    rng: np.random.Generator | None,
) -> tuple[Array, Array, Array]:
    ray = Ray(origin=origins, direction=directions)
    samples = two_phase_samples(octree, contraction, ray, plan, rng)
    return render_rays(octree, samples)


def _chunk_bounds(height: int, chunk_rows: int) -> list[tuple[int, int]]:
    step = max(chunk_rows, 1)
    return [(start, min(start + step, height)) for start in range(0, height, step)]


def render_image(
    octree: DualOctree,
    contraction: Contraction,
    camera: Camera,
    plan: SamplingPlan,
    decoder: Decoder | None = None,
    *,
    rng: np.random.Generator | None = None,
    workers: int = 1,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
) -> RenderOutput:
    """Render every pixel of ``camera`` and decode the feature image.

    Rows are processed in fixed chunks and reassembled in row order, so the
    result does not depend on ``workers``. Chunks run sequentially while a
    gradient tape is active.
    """
    origins, directions = pixel_rays(camera)
    bounds = _chunk_bounds(camera.height, chunk_rows)
    generators: list[np.random.Generator | None] = [None] * len(bounds)
    if plan.jitter:
        parent = rng if rng is not None else np.random.default_rng()
        generators = list(parent.spawn(len(bounds)))

    def _job(index: int) -> tuple[Array, Array, Array]:
        start, stop = bounds[index]
        return _render_rows(
            octree,
            contraction,
            origins[start:stop],
            directions[start:stop],
            plan,
            generators[index],
        )

    if workers > 1 and active_tape() is None:
        with cf.ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_job, range(len(bounds))))
    else:
        chunks = [_job(index) for index in range(len(bounds))]
    feature = ops.concat([chunk[0] for chunk in chunks], axis=0)
    depth = ops.concat([chunk[1] for chunk in chunks], axis=0)
    opacity = ops.concat([chunk[2] for chunk in chunks], axis=0)
    LOGGER.debug(
        "rendered %dx%d pixels in %d chunk(s) with %d worker(s)",
        camera.width,
        camera.height,
        len(bounds),
        workers,
    )
    return RenderOutput(
        feature_image=feature,
        depth_image=depth,
        opacity_image=opacity,
        rgb_image=decode(feature, decoder),
    )
