"""Two-stage categorical depth prediction and lifting of pixel features.

Stage one spreads each pixel's density over ``D`` depth bins and turns it
into occupancy weights ``O_d = T_d (1 - exp(-sigma_d delta_d))`` with
``T_d = exp(-sum_{j<d} sigma_j delta_j)``. The expected depth
``sum_d O_d t_d`` centres ``D_fine`` stage-two candidates, whose own
occupancy scales the pixel feature before it is lifted into world space.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import Variable, value_of
from voxfield.errors import DomainError, ShapeError, ValidationError
from voxfield.geometry import contract_distance, uncontract_distance

if typ.TYPE_CHECKING:
    import numpy.typing as npt

    from voxfield.autodiff.ops import Array
    from voxfield.geometry import Camera

LOGGER = logging.getLogger(__name__)

DEFAULT_FINE_BETA: typ.Final[float] = 1.5


@dc.dataclass(frozen=True, slots=True, eq=False)
class DepthBins:
    """Increasing bin depths ``t`` and gaps ``delta`` (last gap extended)."""

    t: np.ndarray
    delta: np.ndarray

    def __post_init__(self) -> None:
        """Validate monotonicity and positive gaps."""
        if self.t.ndim != 1 or self.t.size < 2:
            message = "depth bins need a 1-D array of at least two depths"
            raise ValidationError(message)
        if np.any(np.diff(self.t) <= 0.0):
            message = "depth bins must be strictly increasing"
            raise ValidationError(message)
        if self.delta.shape != self.t.shape or np.any(self.delta <= 0.0):
            message = "bin gaps must be positive and match the depths"
            raise ValidationError(message)

    @classmethod
    def from_depths(cls, t: npt.ArrayLike) -> DepthBins:
        """Build bins from explicit depths, extending the last gap."""
        depths = np.asarray(t, dtype=np.float64)
        return cls(t=depths, delta=bin_deltas(depths))

    def __len__(self) -> int:
        """Return the number of bins."""
        return int(self.t.size)

    @property
    def near(self) -> float:
        """Return the first bin depth."""
        return float(self.t[0])

    @property
    def far(self) -> float:
        """Return the last bin depth."""
        return float(self.t[-1])


def bin_deltas(t: npt.ArrayLike) -> np.ndarray:
    """Return gaps ``t[d+1] - t[d]`` along the last axis, last gap repeated."""
    depths = np.asarray(t, dtype=np.float64)
    gaps = np.diff(depths, axis=-1)
    return np.concatenate([gaps, gaps[..., -1:]], axis=-1)


def make_bins(
    t_near: float,
    t_far: float,
    count: int,
    *,
    inner: float,
    alpha: float,
) -> DepthBins:
    """Return ``count`` bins uniform in contracted depth over ``[t_near, t_far]``.

    ``inner`` is the scalar inner range of the contraction along rays.
    """
    if count < 2:
        message = f"at least two depth bins are required, got {count}"
        raise ValidationError(message)
    lo, hi = contract_distance(np.array([t_near, t_far]), inner, alpha)
    depths = uncontract_distance(np.linspace(lo, hi, count), inner, alpha)
    depths[0], depths[-1] = t_near, t_far
    return DepthBins.from_depths(depths)


def occupancy_weights(sigma: object, delta: object) -> Array:
    """Return per-bin occupancy weights along the last axis.

    Raises :class:`DomainError` when any density is negative.
    """
    sigma_value = value_of(sigma)
    if np.any(sigma_value < 0.0):
        message = "densities must be non-negative"
        raise DomainError(message)
    if sigma_value.shape[-1] != value_of(delta).shape[-1]:
        raise ShapeError.mismatch(
            "occupancy_weights", sigma_value.shape, value_of(delta).shape
        )
    optical = ops.mul(sigma, delta)
    before = ops.sub(ops.cumsum(optical, axis=-1), optical)
    transmittance = ops.exp(ops.neg(before))
    absorbed = ops.neg(ops.expm1(ops.neg(optical)))
    return ops.mul(transmittance, absorbed)


def final_transmittance(sigma: npt.ArrayLike, delta: npt.ArrayLike) -> np.ndarray:
    """Return ``exp(-sum sigma * delta)`` along the last axis."""
    return np.exp(-np.sum(np.asarray(sigma) * np.asarray(delta), axis=-1))


def expected_depth(occupancy: object, t: object) -> tuple[Array, Array]:
    """Return ``(sum O_d t_d, sum O_d)`` along the last axis.

    Pixels that absorb nothing get depth ``0`` with opacity ``0``.
    """
    depth = ops.sum_(ops.mul(occupancy, t), axis=-1)
    opacity = ops.sum_(occupancy, axis=-1)
    return depth, opacity


def fine_candidates(
    coarse: npt.ArrayLike,
    bins: DepthBins,
    fine_count: int,
    beta: float = DEFAULT_FINE_BETA,
) -> np.ndarray:
    """Return ``fine_count`` uniformly spaced depths around ``coarse``.

    The window spans ``beta`` widths of the coarse bin containing ``coarse``
    on each side and is shifted, never shrunk, to stay inside
    ``[t_1, t_D]``; a window wider than the whole range becomes the range.
    Accepts any array of coarse depths and appends a trailing axis.
    """
    if fine_count < 2:
        message = f"at least two fine candidates are required, got {fine_count}"
        raise ValidationError(message)
    centre = np.asarray(coarse, dtype=np.float64)
    index = np.clip(np.searchsorted(bins.t, centre, side="right") - 1, 0, len(bins) - 1)
    half = beta * bins.delta[index]
    width = 2.0 * half
    span = bins.far - bins.near
    wide = width >= span
    lo = np.where(
        wide, bins.near, np.clip(centre - half, bins.near, bins.far - width)
    )
    width = np.where(wide, span, width)
    steps = np.linspace(0.0, 1.0, fine_count)
    return lo[..., None] + width[..., None] * steps


def fine_occupancy(fine_sigma: object, fine_t: npt.ArrayLike) -> Array:
    """Return occupancy weights on the per-pixel fine grid ``fine_t``."""
    return occupancy_weights(fine_sigma, bin_deltas(fine_t))


def flat_logits(delta: npt.ArrayLike) -> np.ndarray:
    """Return logits whose occupancy is equal in every bin along the last axis.

    Each of the ``D`` bins receives ``1 / (D + 1)`` of the mass; the rest
    passes through.
    """
    gaps = np.asarray(delta, dtype=np.float64)
    count = gaps.shape[-1]
    remaining = count + 1.0 - np.arange(count, dtype=np.float64)
    optical = np.log(remaining / (remaining - 1.0))
    return ops.inverse_softplus(optical / gaps)


def flat_density_logits(bins: DepthBins) -> np.ndarray:
    """Return stage-one logits with equal occupancy in every bin."""
    return flat_logits(bins.delta)


@dc.dataclass(frozen=True, slots=True, eq=False)
class FeatureAffine:
    """Shared map from pixel features to density logits: ``phi @ weight + bias``."""

    weight: object
    bias: object

    def apply(self, features: np.ndarray) -> Array:
        """Return the logit offsets for ``features[H, W, C]``."""
        if features.shape[-1] != value_of(self.weight).shape[0]:
            raise ShapeError.mismatch(
                "feature affine input", value_of(self.weight).shape[:1], features.shape
            )
        return ops.add(ops.matmul(features, self.weight), self.bias)


@dc.dataclass(frozen=True, slots=True, eq=False)
class DepthFrustum:
    """Both depth stages of one camera image plus its pixel features."""

    sigma: Array
    occupancy: Array
    coarse_depth: Array
    opacity: Array
    fine_t: np.ndarray
    fine_sigma: Array
    fine_occupancy: Array
    features: Array

    @property
    def shape(self) -> tuple[int, int]:
        """Return the ``(H, W)`` pixel grid."""
        height, width = value_of(self.coarse_depth).shape
        return height, width

    def check(self, tolerance: float = 1e-6) -> None:
        """Raise :class:`DomainError` when a density or occupancy is out of range."""
        for name in ("sigma", "fine_sigma"):
            if np.any(value_of(getattr(self, name)) < 0.0):
                message = f"{name} holds negative densities"
                raise DomainError(message)
        for name in ("occupancy", "fine_occupancy"):
            weights = value_of(getattr(self, name))
            if np.any(weights < 0.0) or np.any(weights > 1.0):
                message = f"{name} leaves [0, 1]"
                raise DomainError(message)
            if np.any(weights.sum(axis=-1) > 1.0 + tolerance):
                message = f"{name} sums above one"
                raise DomainError(message)

    def to_tensors(self) -> dict[str, np.ndarray]:
        """Return float32 copies of every field for serialization."""
        return {
            field.name: value_of(getattr(self, field.name)).astype(np.float32)
            for field in dc.fields(self)
        }


def predict_frustum(
    coarse_logits: object,
    fine_logits: object,
    bins: DepthBins,
    features: object,
    *,
    coarse_affine: FeatureAffine | None = None,
    fine_affine: FeatureAffine | None = None,
    beta: float = DEFAULT_FINE_BETA,
) -> DepthFrustum:
    """Run both depth stages for one image.

    ``coarse_logits`` is ``(H, W, D)`` and ``fine_logits`` ``(H, W, D_fine)``.
    Densities are ``softplus`` of the logits plus optional affine offsets
    computed from ``features``. Fine candidates are centred on the detached
    coarse depth.
    """
    feature_values = value_of(features)
    coarse_input = coarse_logits
    if coarse_affine is not None:
        coarse_input = ops.add(coarse_input, coarse_affine.apply(feature_values))
    sigma = ops.softplus(coarse_input)
    occupancy = occupancy_weights(sigma, bins.delta)
    depth, opacity = expected_depth(occupancy, bins.t)
    fine_count = value_of(fine_logits).shape[-1]
    fine_t = fine_candidates(ops.detach(depth), bins, fine_count, beta)
    fine_input = fine_logits
    if fine_affine is not None:
        fine_input = ops.add(fine_input, fine_affine.apply(feature_values))
    fine_sigma = ops.softplus(fine_input)
    return DepthFrustum(
        sigma=sigma,
        occupancy=occupancy,
        coarse_depth=depth,
        opacity=opacity,
        fine_t=fine_t,
        fine_sigma=fine_sigma,
        fine_occupancy=fine_occupancy(fine_sigma, fine_t),
        features=features if isinstance(features, Variable) else feature_values,
    )


@dc.dataclass(frozen=True, slots=True, eq=False)
class LiftedPoint:
    """One world-space sample carrying ``O' * phi`` and ``sigma'``."""

    position: np.ndarray
    feature: np.ndarray
    density: float


@dc.dataclass(frozen=True, slots=True, eq=False)
class LiftedPoints:
    """A batch of lifted points in row-major pixel, then depth, order."""

    positions: np.ndarray
    features: Array
    densities: Array

    def __len__(self) -> int:
        """Return the number of points."""
        return int(self.positions.shape[0])

    def __getitem__(self, index: int) -> LiftedPoint:
        """Return point ``index`` as constant values."""
        return LiftedPoint(
            position=self.positions[index].copy(),
            feature=value_of(self.features)[index].copy(),
            density=float(value_of(self.densities)[index]),
        )

    def __iter__(self) -> typ.Iterator[LiftedPoint]:
        """Yield every point in order."""
        return (self[index] for index in range(len(self)))

    @property
    def width(self) -> int:
        """Return the feature width ``C``."""
        return int(value_of(self.features).shape[1])

    @classmethod
    def from_points(cls, points: typ.Sequence[LiftedPoint]) -> LiftedPoints:
        """Stack individual points into a constant batch."""
        if not points:
            message = "cannot batch an empty list of lifted points"
            raise ValidationError(message)
        return cls(
            positions=np.stack([point.position for point in points]),
            features=np.stack([point.feature for point in points]),
            densities=np.array([point.density for point in points]),
        )

    @classmethod
    def concat(cls, batches: typ.Sequence[LiftedPoints]) -> LiftedPoints:
        """Join batches in order, keeping gradients flowing."""
        return cls(
            positions=np.concatenate([batch.positions for batch in batches]),
            features=ops.concat([batch.features for batch in batches], axis=0),
            densities=ops.concat([batch.densities for batch in batches], axis=0),
        )


def lift_pixel(
    camera: Camera,
    u: float,
    v: float,
    fine_t: npt.ArrayLike,
    fine_occupancy: npt.ArrayLike,
    fine_sigma: npt.ArrayLike,
    feature: npt.ArrayLike,
) -> list[LiftedPoint]:
    """Lift one pixel into ``len(fine_t)`` points along its ray."""
    direction = camera.directions(u, v)
    depths = np.asarray(fine_t, dtype=np.float64)
    weights = np.asarray(fine_occupancy, dtype=np.float64)
    densities = np.asarray(fine_sigma, dtype=np.float64)
    phi = np.asarray(feature, dtype=np.float64)
    return [
        LiftedPoint(
            position=camera.origin + depth * direction,
            feature=weight * phi,
            density=float(density),
        )
        for depth, weight, density in zip(depths, weights, densities, strict=True)
    ]


def lift_image(camera: Camera, frustum: DepthFrustum) -> LiftedPoints:
    """Lift every pixel of ``frustum``; ``H * W * D_fine`` points in total."""
    height, width = frustum.shape
    if (camera.height, camera.width) != (height, width):
        raise ShapeError.mismatch(
            "lift_image frustum", (camera.height, camera.width), (height, width)
        )
    uu, vv = camera.pixel_centres()
    directions = camera.directions(uu, vv)
    positions = camera.origin + frustum.fine_t[..., None] * directions[:, :, None, :]
    fine_count = frustum.fine_t.shape[-1]
    channels = value_of(frustum.features).shape[-1]
    scaled = ops.mul(
        ops.reshape(frustum.fine_occupancy, (height, width, fine_count, 1)),
        ops.reshape(frustum.features, (height, width, 1, channels)),
    )
    count = height * width * fine_count
    LOGGER.debug("lifted %d points from a %dx%d frustum", count, width, height)
    return LiftedPoints(
        positions=positions.reshape(count, 3),
        features=ops.reshape(scaled, (count, channels)),
        densities=ops.reshape(frustum.fine_sigma, (count,)),
    )
