"""Pinhole cameras, rays and the unbounded-scene contraction.

Camera frames follow the common driving-rig convention: ``+x`` right,
``+y`` down, ``+z`` forward. Poses are world-from-camera rigid transforms.

The contraction maps world points into the open cube ``(-1, 1)^3``. With
``q = p / p_inner`` and ``n = ||q||_inf`` it is linear (``alpha * q``) for
``n <= 1`` and ``(1 - (1 - alpha) / n) * q / n`` beyond, so the inner box
fills the central ``alpha`` fraction of the cube.
"""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

from voxfield.errors import DomainError, ValidationError

if typ.TYPE_CHECKING:
    import numpy.typing as npt

ORTHONORMAL_TOLERANCE: typ.Final[float] = 1e-6
_BELOW_ONE: typ.Final[float] = float(np.nextafter(1.0, 0.0))


class CameraValidationError(ValidationError):
    """Raised when camera intrinsics or pose violate their invariants."""

    def __init__(self, field: str, detail: str) -> None:
        """Record the offending ``field``."""
        self.field = field
        super().__init__(f"{field}: {detail}")


@dc.dataclass(frozen=True, slots=True, eq=False)
class Camera:
    """Pinhole intrinsics plus a world-from-camera pose."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    t_wc: np.ndarray = dc.field(default_factory=lambda: np.eye(4))

    def __post_init__(self) -> None:
        """Validate intrinsics and the rotation block of the pose."""
        pose = np.asarray(self.t_wc, dtype=np.float64)
        object.__setattr__(self, "t_wc", pose)
        if self.width <= 0 or self.height <= 0:
            raise CameraValidationError("width", "image size must be positive")
        if self.fx <= 0:
            raise CameraValidationError("fx", "focal length must be positive")
        if self.fy <= 0:
            raise CameraValidationError("fy", "focal length must be positive")
        if not 0 < self.cx < self.width:
            raise CameraValidationError("cx", "principal point outside the image")
        if not 0 < self.cy < self.height:
            raise CameraValidationError("cy", "principal point outside the image")
        if pose.shape != (4, 4):
            raise CameraValidationError("T_wc", f"expected 4x4, got {pose.shape}")
        rotation = pose[:3, :3]
        gram_error = np.max(np.abs(rotation.T @ rotation - np.eye(3)))
        if gram_error > ORTHONORMAL_TOLERANCE:
            raise CameraValidationError("T_wc", "rotation block is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise CameraValidationError("T_wc", "rotation determinant is not 1")

    @property
    def rotation(self) -> np.ndarray:
        """Return the world-from-camera rotation block."""
        return self.t_wc[:3, :3]

    @property
    def origin(self) -> np.ndarray:
        """Return the camera centre in world coordinates."""
        return self.t_wc[:3, 3]

    def scaled(self, factor: float) -> Camera:
        """Return the camera with image size and intrinsics scaled by ``factor``."""
        return Camera(
            width=round(self.width * factor),
            height=round(self.height * factor),
            fx=self.fx * factor,
            fy=self.fy * factor,
            cx=self.cx * factor,
            cy=self.cy * factor,
            t_wc=self.t_wc.copy(),
        )

    def translated(self, offset_camera: npt.ArrayLike) -> Camera:
        """Return the camera moved by ``offset_camera`` metres in its own frame."""
        pose = self.t_wc.copy()
        offset = np.asarray(offset_camera, dtype=np.float64)
        pose[:3, 3] = self.origin + self.rotation @ offset
        return dc.replace(self, t_wc=pose)

    def pixel_centres(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(u, v)`` grids of pixel centres, shape ``(H, W)``."""
        u = np.arange(self.width, dtype=np.float64) + 0.5
        v = np.arange(self.height, dtype=np.float64) + 0.5
        uu, vv = np.meshgrid(u, v)
        return uu, vv

    def directions(self, u: npt.ArrayLike, v: npt.ArrayLike) -> np.ndarray:
        """Return unit world directions through pixel coordinates ``(u, v)``."""
        uu, vv = np.broadcast_arrays(
            np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
        )
        local = np.stack(
            [(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)],
            axis=-1,
        )
        world = local @ self.rotation.T
        return world / np.linalg.norm(world, axis=-1, keepdims=True)

    def project(
        self, points: npt.ArrayLike
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project world ``points[..., 3]`` to ``(u, v, z)`` in pixels and metres."""
        local = (np.asarray(points, dtype=np.float64) - self.origin) @ self.rotation
        z = local[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * local[..., 0] / z + self.cx
            v = self.fy * local[..., 1] / z + self.cy
        return u, v, z


@dc.dataclass(frozen=True, slots=True, eq=False)
class Ray:
    """A half-line with unit ``direction`` in world coordinates."""

    origin: np.ndarray
    direction: np.ndarray

    def at(self, t: npt.ArrayLike) -> np.ndarray:
        """Return the points at distances ``t`` along the ray."""
        distances = np.asarray(t, dtype=np.float64)[..., None]
        return self.origin + distances * self.direction


def pixel_ray(camera: Camera, u: float, v: float) -> Ray:
    """Return the ray through pixel coordinate ``(u, v)`` (centres at ``+0.5``)."""
    return Ray(origin=camera.origin.copy(), direction=camera.directions(u, v))


def pixel_rays(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(origins, directions)`` for every pixel, each ``(H, W, 3)``."""
    uu, vv = camera.pixel_centres()
    directions = camera.directions(uu, vv)
    origins = np.broadcast_to(camera.origin, directions.shape).copy()
    return origins, directions


@dc.dataclass(frozen=True, slots=True, eq=False)
class Contraction:
    """Per-axis inner half-extent ``p_inner`` and inner proportion ``alpha``."""

    p_inner: np.ndarray = dc.field(default_factory=lambda: np.array([50.0, 50.0, 6.4]))
    alpha: float = 0.8

    def __post_init__(self) -> None:
        """Validate the parameters."""
        extent = np.asarray(self.p_inner, dtype=np.float64).reshape(3)
        object.__setattr__(self, "p_inner", extent)
        if not 0.0 < self.alpha < 1.0:
            message = f"alpha must lie in (0, 1), got {self.alpha}"
            raise ValidationError(message)
        if np.any(extent <= 0.0):
            message = "every p_inner component must be positive"
            raise ValidationError(message)

    @property
    def horizontal_extent(self) -> float:
        """Return the scalar inner range used for depth along rays."""
        return float(max(self.p_inner[0], self.p_inner[1]))


def _contract_normalised(q: np.ndarray, alpha: float, norm: np.ndarray) -> np.ndarray:
    safe = np.maximum(norm, 1.0)
    outer = (1.0 - (1.0 - alpha) / safe) * q / safe
    result = np.where(norm <= 1.0, alpha * q, outer)
    return np.clip(result, -_BELOW_ONE, _BELOW_ONE)


def contract(contraction: Contraction, p: npt.ArrayLike) -> np.ndarray:
    """Map world points ``p[..., 3]`` into the open cube ``(-1, 1)^3``."""
    q = np.asarray(p, dtype=np.float64) / contraction.p_inner
    norm = np.max(np.abs(q), axis=-1, keepdims=True)
    return _contract_normalised(q, contraction.alpha, norm)


def uncontract(contraction: Contraction, s: npt.ArrayLike) -> np.ndarray:
    """Invert :func:`contract` for points strictly inside the cube."""
    points = np.asarray(s, dtype=np.float64)
    norm = np.max(np.abs(points), axis=-1, keepdims=True)
    if np.any(norm >= 1.0):
        message = "contracted coordinates must satisfy ||s||_inf < 1"
        raise DomainError(message)
    alpha = contraction.alpha
    outer_norm = (1.0 - alpha) / (1.0 - norm)
    safe = np.where(norm > 0.0, norm, 1.0)
    q = np.where(norm <= alpha, points / alpha, points / safe * outer_norm)
    return q * contraction.p_inner


def contract_distance(t: npt.ArrayLike, inner: float, alpha: float) -> np.ndarray:
    """Apply the scalar contraction to non-negative distances ``t``."""
    q = np.asarray(t, dtype=np.float64) / inner
    return _contract_normalised(q, alpha, np.abs(q))


def uncontract_distance(s: npt.ArrayLike, inner: float, alpha: float) -> np.ndarray:
    """Invert :func:`contract_distance` for ``0 <= s < 1``."""
    values = np.asarray(s, dtype=np.float64)
    if np.any(values >= 1.0):
        message = "contracted distances must be below 1"
        raise DomainError(message)
    outer = (1.0 - alpha) / (1.0 - values)
    return np.where(values <= alpha, values / alpha, outer) * inner


def grid_coords(s: npt.ArrayLike, level: int) -> np.ndarray:
    """Return integer cell indices of contracted points at ``level``.

    ``cell_k = floor((s_k + 1) / 2 * 2**level)`` clamped to
    ``[0, 2**level - 1]``.
    """
    cells = 1 << level
    scaled = np.floor((np.asarray(s, dtype=np.float64) + 1.0) * 0.5 * cells)
    return np.clip(scaled, 0, cells - 1).astype(np.int64)


def cell_centres(cells: npt.ArrayLike, level: int) -> np.ndarray:
    """Return the contracted coordinates of the centres of ``cells``."""
    size = 2.0 / (1 << level)
    return -1.0 + (np.asarray(cells, dtype=np.float64) + 0.5) * size
