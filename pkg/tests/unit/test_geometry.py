"""Tests for :mod:`voxfield.geometry`."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from voxfield.errors import DomainError
from voxfield.geometry import (
    Camera,
    CameraValidationError,
    Contraction,
    cell_centres,
    contract,
    contract_distance,
    grid_coords,
    pixel_ray,
    pixel_rays,
    uncontract,
    uncontract_distance,
)


def _camera(pose: np.ndarray | None = None) -> Camera:
    return Camera(
        width=8,
        height=6,
        fx=10.0,
        fy=10.0,
        cx=4.0,
        cy=3.0,
        t_wc=np.eye(4) if pose is None else pose,
    )


def test_principal_ray_points_forward() -> None:
    """The principal pixel of an identity camera looks down ``+z``."""
    ray = pixel_ray(_camera(), 4.0, 3.0)
    np.testing.assert_allclose(ray.direction, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(ray.origin, [0.0, 0.0, 0.0])


def test_unit_offset_ray_is_diagonal() -> None:
    """One focal length right of the centre gives a 45 degree ray."""
    ray = pixel_ray(_camera(), 4.0 + 10.0, 3.0)
    expected = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
    np.testing.assert_allclose(ray.direction, expected, atol=1e-12)


def test_rotated_camera_rotates_rays() -> None:
    """A quarter turn about ``+y`` sends the principal ray along ``+x``."""
    pose = np.eye(4)
    pose[:3, :3] = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]
    ray = pixel_ray(_camera(pose), 4.0, 3.0)
    np.testing.assert_allclose(ray.direction, [1.0, 0.0, 0.0], atol=1e-12)


def test_pixel_rays_are_unit_length() -> None:
    """Every pixel ray has a unit direction and the camera origin."""
    origins, directions = pixel_rays(_camera())
    assert directions.shape == (6, 8, 3)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=-1), 1.0)
    np.testing.assert_array_equal(origins, 0.0)


@pytest.mark.parametrize(
    ("overrides", "field"),
    [
        ({"fx": 0.0}, "fx"),
        ({"fy": -1.0}, "fy"),
        ({"cx": 8.0}, "cx"),
        ({"cy": 0.0}, "cy"),
        ({"width": 0}, "width"),
        ({"t_wc": np.diag([2.0, 1.0, 1.0, 1.0])}, "T_wc"),
        ({"t_wc": np.diag([-1.0, 1.0, 1.0, 1.0])}, "T_wc"),
        ({"t_wc": np.eye(3)}, "T_wc"),
    ],
)
def test_camera_validation_names_field(
    overrides: dict[str, object], field: str
) -> None:
    """Invalid intrinsics or poses name the offending field."""
    values: dict[str, object] = {
        "width": 8,
        "height": 6,
        "fx": 10.0,
        "fy": 10.0,
        "cx": 4.0,
        "cy": 3.0,
        "t_wc": np.eye(4),
    }
    values.update(overrides)
    with pytest.raises(CameraValidationError) as excinfo:
        Camera(**values)  # pyright: ignore[reportArgumentType]
    assert excinfo.value.field == field


def test_translated_camera_moves_in_its_own_frame() -> None:
    """Offsets are expressed in camera axes and keep the rotation."""
    pose = np.eye(4)
    pose[:3, :3] = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]
    moved = _camera(pose).translated([0.0, 0.0, 2.0])
    np.testing.assert_allclose(moved.origin, [2.0, 0.0, 0.0])
    np.testing.assert_array_equal(moved.rotation, pose[:3, :3])


def test_scaled_camera_halves_intrinsics() -> None:
    """Scaling keeps the field of view."""
    half = _camera().scaled(0.5)
    assert (half.width, half.height) == (4, 3)
    assert (half.fx, half.cx, half.cy) == (5.0, 2.0, 1.5)


def test_contract_fixed_points() -> None:
    """The origin is fixed and the inner box corner maps to ``alpha``."""
    contraction = Contraction(p_inner=np.array([50.0, 50.0, 6.4]), alpha=0.8)
    np.testing.assert_array_equal(contract(contraction, [0.0, 0.0, 0.0]), 0.0)
    corner = contract(contraction, [50.0, 50.0, 6.4])
    np.testing.assert_allclose(corner, [0.8, 0.8, 0.8])


def test_contract_far_points_approach_the_boundary() -> None:
    """Far points approach but never reach the cube face."""
    contraction = Contraction(p_inner=np.ones(3), alpha=0.8)
    far = contract(contraction, [1e4, 0.0, 0.0])
    assert 0.999 < far[0] < 1.0
    infinite = contract(contraction, [1e300, 0.0, 0.0])
    assert infinite[0] < 1.0


def test_contract_is_continuous_at_the_inner_boundary() -> None:
    """Both branches agree on the inner box surface."""
    contraction = Contraction(p_inner=np.array([2.0, 3.0, 1.0]), alpha=0.7)
    inside = contract(contraction, [2.0 - 1e-9, 1.0, 0.5])
    outside = contract(contraction, [2.0 + 1e-9, 1.0, 0.5])
    np.testing.assert_allclose(inside, outside, atol=1e-6)


def test_uncontract_inner_branch_is_linear() -> None:
    """Inside the inner cube the inverse is ``s * p_inner / alpha``."""
    contraction = Contraction(p_inner=np.array([4.0, 4.0, 2.0]), alpha=0.8)
    s = np.array([0.4, -0.1, 0.2])
    np.testing.assert_allclose(uncontract(contraction, s), s * [4.0, 4.0, 2.0] / 0.8)


def test_uncontract_round_trips() -> None:
    """Random contracted points survive a round trip."""
    rng = np.random.default_rng(3)
    contraction = Contraction(p_inner=np.array([50.0, 50.0, 6.4]), alpha=0.8)
    s = rng.uniform(-0.999, 0.999, size=(1000, 3))
    back = contract(contraction, uncontract(contraction, s))
    np.testing.assert_allclose(back, s, atol=1e-9)


def test_uncontract_rejects_the_boundary() -> None:
    """Points on the cube face have no preimage."""
    with pytest.raises(DomainError):
        uncontract(Contraction(), [1.0, 0.0, 0.0])


def test_scalar_contraction_round_trips() -> None:
    """Scalar depth contraction inverts on both branches."""
    t = np.array([0.0, 1.0, 25.0, 50.0, 120.0, 5000.0])
    s = contract_distance(t, 50.0, 0.8)
    assert np.all(np.diff(s) > 0.0)
    np.testing.assert_allclose(uncontract_distance(s, 50.0, 0.8), t, rtol=1e-9)


@pytest.mark.parametrize(
    ("s", "level", "expected"),
    [
        ((-1.0 + 1e-12, -1.0 + 1e-12, -1.0 + 1e-12), 7, (0, 0, 0)),
        ((0.0, 0.0, 0.0), 1, (1, 1, 1)),
        ((1.0, 1.0, 1.0), 3, (7, 7, 7)),
    ],
)
def test_grid_coords_examples(
    s: tuple[float, float, float], level: int, expected: tuple[int, int, int]
) -> None:
    """Cell indices are floored and clamped to the grid."""
    assert tuple(grid_coords(s, level)) == expected


def test_grid_coords_match_exact_arithmetic() -> None:
    """Indices agree with an exact rational evaluation."""
    s = (0.3, -0.2, 0.7)
    exact = tuple(
        math.floor((Fraction(value) + 1) / 2 * 2**9) for value in s
    )
    assert tuple(grid_coords(s, 9)) == exact


def test_cell_centres_land_in_their_cells() -> None:
    """The centre of every cell maps back to that cell."""
    cells = np.stack(np.meshgrid(*[np.arange(4)] * 3, indexing="ij"), -1).reshape(-1, 3)
    np.testing.assert_array_equal(grid_coords(cell_centres(cells, 2), 2), cells)
