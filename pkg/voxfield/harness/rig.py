"""Camera rigs for synthetic scenes and translated virtual views."""

from __future__ import annotations

import dataclasses as dc
import math
import typing as typ

import numpy as np

from voxfield.geometry import Camera

if typ.TYPE_CHECKING:
    import numpy.typing as npt

    from .scene import RigSpec

HOLDOUT_NAME: typ.Final[str] = "holdout"
HOLDOUT_FORWARD: typ.Final[float] = 0.3


def yaw_pose(yaw: float, origin: npt.ArrayLike) -> np.ndarray:
    """Return a level world-from-camera pose looking along ``yaw`` radians.

    The world is z-up; the camera looks along ``+z`` with ``+x`` right and
    ``+y`` down, so ``yaw = 0`` looks along world ``+x``.
    """
    forward = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    pose = np.eye(4)
    pose[:3, :3] = np.stack([right, down, forward], axis=1)
    pose[:3, 3] = np.asarray(origin, dtype=np.float64)
    return pose


def pinhole(width: int, height: int, fov_degrees: float, pose: np.ndarray) -> Camera:
    """Return a square-pixel camera with horizontal field of view ``fov``."""
    focal = 0.5 * width / math.tan(math.radians(fov_degrees) / 2.0)
    return Camera(
        width=width,
        height=height,
        fx=focal,
        fy=focal,
        cx=0.5 * width,
        cy=0.5 * height,
        t_wc=pose,
    )


@dc.dataclass(frozen=True, slots=True)
class RigCamera:
    """A named camera and the split it belongs to."""

    name: str
    camera: Camera
    split: typ.Literal["train", "holdout"] = "train"


def ring_rig(rig: RigSpec) -> list[RigCamera]:
    """Return outward-facing cameras overlapping by ``rig.overlap`` degrees.

    The optional held-out camera sits slightly forward of the rig, halfway
    between the centre camera and its neighbour.
    """
    spacing = math.radians(rig.fov - rig.overlap)
    centre = (rig.cameras - 1) / 2.0
    origin = np.array([0.0, 0.0, rig.mount_height])
    cameras = [
        RigCamera(
            name=f"cam{index}",
            camera=pinhole(
                rig.width,
                rig.height,
                rig.fov,
                yaw_pose((index - centre) * spacing, origin),
            ),
        )
        for index in range(rig.cameras)
    ]
    if rig.holdout:
        yaw = 0.5 * spacing
        shifted = origin + HOLDOUT_FORWARD * np.array([math.cos(yaw), math.sin(yaw), 0])
        cameras.append(
            RigCamera(
                name=HOLDOUT_NAME,
                camera=pinhole(rig.width, rig.height, rig.fov, yaw_pose(yaw, shifted)),
                split="holdout",
            )
        )
    return cameras


@dc.dataclass(frozen=True, slots=True, eq=False)
class VirtualPoseSet:
    """A base camera and camera-frame translations of it."""

    base: Camera
    offsets: tuple[tuple[float, float, float], ...]

    @classmethod
    def around(cls, camera: Camera, distance: float = 1.0) -> VirtualPoseSet:
        """Return the left, right and up offsets at ``distance`` metres."""
        return cls(
            base=camera,
            offsets=(
                (-distance, 0.0, 0.0),
                (distance, 0.0, 0.0),
                (0.0, -distance, 0.0),
            ),
        )

    def cameras(self) -> list[Camera]:
        """Return one translated camera per offset, orientation unchanged."""
        return [self.base.translated(offset) for offset in self.offsets]


def virtual_poses(camera: Camera, distance: float = 1.0) -> list[Camera]:
    """Return ``camera`` moved left, right and up by ``distance`` metres."""
    return VirtualPoseSet.around(camera, distance).cameras()
