"""Closed-form ray oracles for box scenes.

Boxes have constant density, so transmittance, colour and expected depth
along a ray integrate exactly over the intervals between box faces.
"""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy.typing as npt

    from voxfield.geometry import Ray

    from .scene import Box, SyntheticScene

NO_HIT: typ.Final[int] = -1


def slab_intersect(
    origins: npt.ArrayLike,
    directions: npt.ArrayLike,
    box: Box,
) -> tuple[np.ndarray, np.ndarray]:
    """Return entry and exit distances of rays ``[..., 3]`` through ``box``.

    A ray misses when ``exit < max(entry, 0)``. Rays parallel to a slab
    either always or never lie inside it.
    """
    start = np.asarray(origins, dtype=np.float64)
    heading = np.asarray(directions, dtype=np.float64)
    lo, hi = box.bounds()
    parallel = heading == 0.0
    safe = np.where(parallel, 1.0, heading)
    near = (lo - start) / safe
    far = (hi - start) / safe
    inside = (start >= lo) & (start <= hi)
    entry = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(near, far))
    leave = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(near, far))
    return entry.max(axis=-1), leave.min(axis=-1)


def first_hit(
    scene: SyntheticScene,
    origins: npt.ArrayLike,
    directions: npt.ArrayLike,
    t_near: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(distance, box_index)`` of the first visible surface per ray.

    Boxes without density are ignored. Missed rays get distance ``0`` and
    index ``NO_HIT``; rays starting inside a box hit it at ``t_near``.
    """
    start = np.asarray(origins, dtype=np.float64)
    heading = np.asarray(directions, dtype=np.float64)
    shape = np.broadcast_shapes(start.shape, heading.shape)[:-1]
    best = np.full(shape, np.inf)
    index = np.full(shape, NO_HIT, dtype=np.int64)
    for position, box in enumerate(scene.boxes):
        if box.density <= 0.0:
            continue
        entry, leave = slab_intersect(start, heading, box)
        surface = np.maximum(entry, t_near)
        closer = (leave >= surface) & (surface < best)
        best = np.where(closer, surface, best)
        index = np.where(closer, position, index)
    return np.where(index == NO_HIT, 0.0, best), index


def _overlap(
    entry: np.ndarray, leave: np.ndarray, lo: float, hi: np.ndarray
) -> np.ndarray:
    return np.clip(np.minimum(leave, hi) - np.maximum(entry, lo), 0.0, None)


def analytic_transmittance(
    ray: Ray, scene: SyntheticScene, t_start: float = 0.0
) -> cabc.Callable[[npt.ArrayLike], np.ndarray]:
    """Return ``t -> exp(-sum_i sigma_i * overlap_i(t))`` for one ray.

    ``overlap_i(t)`` is the length of box ``i`` inside ``[t_start, t]``.
    """
    crossings = [
        (box.density, *slab_intersect(ray.origin, ray.direction, box))
        for box in scene.boxes
        if box.density > 0.0
    ]

    def transmittance(t: npt.ArrayLike) -> np.ndarray:
        depth = np.asarray(t, dtype=np.float64)
        optical = np.zeros_like(depth)
        for density, entry, leave in crossings:
            optical = optical + density * _overlap(entry, leave, t_start, depth)
        return np.exp(-optical)

    return transmittance


@dc.dataclass(frozen=True, slots=True, eq=False)
class AnalyticRender:
    """Exact volume-rendering integrals over ``[t_near, t_far]``."""

    color: np.ndarray
    feature: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray


def analytic_render(
    scene: SyntheticScene,
    origins: npt.ArrayLike,
    directions: npt.ArrayLike,
    t_near: float,
    t_far: float,
) -> AnalyticRender:
    """Integrate colour, feature and depth exactly along rays ``[..., 3]``.

    Overlapping boxes add their densities; colours and features mix in
    proportion to density. Background is black with zero feature.
    """
    start = np.asarray(origins, dtype=np.float64)
    heading = np.asarray(directions, dtype=np.float64)
    shape = np.broadcast_shapes(start.shape, heading.shape)[:-1]
    width = scene.feature_width
    boxes = scene.visible_boxes()
    if not boxes:
        return AnalyticRender(
            color=np.zeros((*shape, 3)),
            feature=np.zeros((*shape, width)),
            depth=np.zeros(shape),
            opacity=np.zeros(shape),
        )
    spans = [slab_intersect(start, heading, box) for box in boxes]
    faces = [np.clip(face, t_near, t_far) for span in spans for face in span]
    ends = [np.full(shape, t_near), np.full(shape, t_far)]
    edges = np.sort(np.stack([*faces, *ends], axis=-1), axis=-1)
    lower, upper = edges[..., :-1], edges[..., 1:]
    length = upper - lower
    middle = 0.5 * (lower + upper)
    sigma = np.zeros(middle.shape)
    color = np.zeros((*middle.shape, 3))
    feature = np.zeros((*middle.shape, width))
    for box, (entry, leave) in zip(boxes, spans, strict=True):
        inside = (middle >= entry[..., None]) & (middle <= leave[..., None])
        weight = np.where(inside, box.density, 0.0)
        sigma += weight
        color += weight[..., None] * np.asarray(box.color)
        if width:
            feature += weight[..., None] * np.asarray(box.feature)
    optical = sigma * length
    before = np.cumsum(optical, axis=-1) - optical
    entering = np.exp(-before)
    absorbed = -np.expm1(-optical)
    safe = np.where(sigma > 0.0, sigma, 1.0)
    mass = entering * absorbed
    tail = (absorbed - optical * np.exp(-optical)) / safe
    depth = np.sum(entering * (lower * absorbed + tail), axis=-1)
    return AnalyticRender(
        color=np.sum((mass / safe)[..., None] * color, axis=-2),
        feature=np.sum((mass / safe)[..., None] * feature, axis=-2),
        depth=depth,
        opacity=np.sum(mass, axis=-1),
    )
