"""Two-phase ray sampling: stratified uniform, then importance by weights.

Samples are placed in contracted-depth space by default so that distant
regions, which the grid covers coarsely, receive proportionally fewer
samples. Every function accepts a single ray or a batch whose origins and
directions share a leading shape ``R``.
"""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

from voxfield.errors import DomainError, ValidationError
from voxfield.frustum import bin_deltas
from voxfield.geometry import contract, contract_distance, uncontract_distance

if typ.TYPE_CHECKING:
    import numpy.typing as npt

    from voxfield.geometry import Contraction, Ray

WEIGHT_FLOOR: typ.Final[float] = 1e-5
DEFAULT_UNIFORM_SAMPLES: typ.Final[int] = 64
DEFAULT_IMPORTANCE_SAMPLES: typ.Final[int] = 32


@dc.dataclass(frozen=True, slots=True, eq=False)
class RaySamples:
    """Sorted sample distances with their contracted positions and widths."""

    t_values: np.ndarray
    positions: np.ndarray
    deltas: np.ndarray

    def __len__(self) -> int:
        """Return the number of samples per ray."""
        return int(self.t_values.shape[-1])


def _points(
    origin: npt.ArrayLike, direction: npt.ArrayLike, t: np.ndarray
) -> np.ndarray:
    start = np.asarray(origin, dtype=np.float64)[..., None, :]
    heading = np.asarray(direction, dtype=np.float64)[..., None, :]
    return start + t[..., None] * heading


def _cell_edges(t: np.ndarray, t_near: float, t_far: float) -> np.ndarray:
    mids = 0.5 * (t[..., 1:] + t[..., :-1])
    lead = np.full((*t.shape[:-1], 1), t_near)
    tail = np.full((*t.shape[:-1], 1), t_far)
    return np.concatenate([lead, mids, tail], axis=-1)


def cell_deltas(t: npt.ArrayLike, t_near: float, t_far: float) -> np.ndarray:
    """Return the width of the interval each sample owns in ``[t_near, t_far]``.

    Interval edges are the range ends and the midpoints between neighbours,
    so the widths of one ray sum to ``t_far - t_near``.
    """
    depths = np.asarray(t, dtype=np.float64)
    return np.maximum(np.diff(_cell_edges(depths, t_near, t_far), axis=-1), 0.0)


def samples_at(
    ray: Ray,
    contraction: Contraction,
    t: npt.ArrayLike,
    *,
    bounds: tuple[float, float] | None = None,
) -> RaySamples:
    """Return :class:`RaySamples` for explicit sorted distances ``t``.

    With ``bounds`` the samples partition ``[t_near, t_far]`` through
    :func:`cell_deltas`; without, deltas are the gaps to the next sample
    with the last gap repeated.
    """
    t_values = np.asarray(t, dtype=np.float64)
    deltas = bin_deltas(t_values) if bounds is None else cell_deltas(t_values, *bounds)
    return RaySamples(
        t_values=t_values,
        positions=contract(contraction, _points(ray.origin, ray.direction, t_values)),
        deltas=deltas,
    )


def _check_range(t_near: float, t_far: float, count: int) -> None:
    if count < 2:
        message = f"at least two samples per ray are required, got {count}"
        raise ValidationError(message)
    if not 0.0 <= t_near < t_far:
        message = f"need 0 <= t_near < t_far, got [{t_near}, {t_far}]"
        raise DomainError(message)


def _batch_shape(ray: Ray) -> tuple[int, ...]:
    return np.broadcast_shapes(
        np.shape(ray.origin)[:-1], np.shape(ray.direction)[:-1]
    )


def sample_uniform(
    ray: Ray,
    contraction: Contraction,
    t_near: float,
    t_far: float,
    count: int = DEFAULT_UNIFORM_SAMPLES,
    *,
    jitter: bool = False,
    rng: np.random.Generator | None = None,
    linear: bool = False,
) -> RaySamples:
    """Draw one sample from each of ``count`` equal sub-intervals.

    Sub-intervals are equal in contracted depth unless ``linear`` is set.
    Without ``jitter`` every sample sits at its sub-interval's midpoint.
    """
    _check_range(t_near, t_far, count)
    inner, alpha = contraction.horizontal_extent, contraction.alpha
    if linear:
        lo, hi = t_near, t_far
    else:
        lo, hi = contract_distance(np.array([t_near, t_far]), inner, alpha)
    shape = (*_batch_shape(ray), count)
    offsets = np.full(shape, 0.5)
    if jitter:
        generator = rng if rng is not None else np.random.default_rng()
        offsets = generator.uniform(0.0, 1.0, size=shape)
    u = lo + (np.arange(count) + offsets) * ((hi - lo) / count)
    t = u if linear else uncontract_distance(u, inner, alpha)
    return samples_at(
        ray, contraction, np.clip(t, t_near, t_far), bounds=(t_near, t_far)
    )


def _strictly_increasing(t: np.ndarray) -> np.ndarray:
    result = np.sort(t, axis=-1)
    while True:
        tied = np.diff(result, axis=-1) <= 0.0
        if not tied.any():
            return result
        nudged = np.nextafter(result[..., :-1], np.inf)
        result[..., 1:] = np.where(tied, nudged, result[..., 1:])


def importance_draws(
    t_values: npt.ArrayLike,
    weights: npt.ArrayLike,
    count: int,
    *,
    t_near: float,
    t_far: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Return ``count`` distances drawn by inverse CDF from ``weights``.

    Sample ``i`` owns the interval between the midpoints to its neighbours
    (``t_near`` and ``t_far`` at the ends) with a constant density
    proportional to ``weights[i] + WEIGHT_FLOOR``. Without ``rng`` the
    quantiles are the stratified ``(k + 0.5) / count``.
    """
    t = np.asarray(t_values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0.0):
        message = "importance weights must be non-negative"
        raise DomainError(message)
    edges = _cell_edges(t, t_near, t_far)
    pdf = w + WEIGHT_FLOOR
    cdf = np.cumsum(pdf, axis=-1) / np.sum(pdf, axis=-1, keepdims=True)
    cdf = np.concatenate([np.zeros((*t.shape[:-1], 1)), cdf], axis=-1)
    shape = (*t.shape[:-1], count)
    if rng is None:
        quantiles = np.broadcast_to((np.arange(count) + 0.5) / count, shape)
    else:
        quantiles = np.sort(rng.uniform(0.0, 1.0, size=shape), axis=-1)
    index = np.sum(quantiles[..., :, None] >= cdf[..., None, :], axis=-1) - 1
    index = np.clip(index, 0, t.shape[-1] - 1)
    below = np.take_along_axis(cdf, index, axis=-1)
    above = np.take_along_axis(cdf, index + 1, axis=-1)
    left = np.take_along_axis(edges, index, axis=-1)
    right = np.take_along_axis(edges, index + 1, axis=-1)
    span = np.where(above > below, above - below, 1.0)
    draws = left + (quantiles - below) / span * (right - left)
    return np.clip(draws, t_near, t_far)


def sample_importance(
    ray: Ray,
    contraction: Contraction,
    coarse: RaySamples,
    weights: npt.ArrayLike,
    count: int = DEFAULT_IMPORTANCE_SAMPLES,
    *,
    t_near: float,
    t_far: float,
    rng: np.random.Generator | None = None,
) -> RaySamples:
    """Add ``count`` importance samples to ``coarse`` and return all, sorted.

    All-zero ``weights`` degrade to uniform sampling over the coarse
    intervals. Coincident distances are separated by one ulp so the merged
    sequence stays strictly increasing.
    """
    _check_range(t_near, t_far, count)
    draws = importance_draws(
        coarse.t_values, weights, count, t_near=t_near, t_far=t_far, rng=rng
    )
    merged = np.concatenate([coarse.t_values, draws], axis=-1)
    return samples_at(
        ray, contraction, _strictly_increasing(merged), bounds=(t_near, t_far)
    )
