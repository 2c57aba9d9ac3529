"""Tests for the synthetic box scenes, their oracles and target synthesis."""

from __future__ import annotations

import math
import typing as typ

import numpy as np
import pytest

from tests.helpers.scenes import WALL_CLASS, WALL_FEATURE, wall_scene
from voxfield.errors import SceneDescriptionError
from voxfield.geometry import Ray
from voxfield.harness import (
    MANIFEST_FILENAME,
    NO_HIT,
    SCENE_FILENAME,
    Box,
    RigSpec,
    SyntheticScene,
    analytic_render,
    analytic_transmittance,
    dump_scene,
    first_hit,
    load_scene,
    occupancy_truth,
    pinhole,
    ring_rig,
    slab_intersect,
    sparse_depth,
    validate_scene,
    virtual_poses,
    yaw_pose,
)
from voxfield.objectives import OTHERS
from voxfield.tensor_io import open_scene

if typ.TYPE_CHECKING:
    from pathlib import Path

X_AXIS = np.array([1.0, 0.0, 0.0])
ORIGIN = np.zeros(3)


def _slab(lower: float, upper: float, density: float = 2.0, **extra: object) -> Box:
    return Box(
        lower=(lower, -1.0, -1.0),
        upper=(upper, 1.0, 1.0),
        density=density,
        **extra,  # pyright: ignore[reportArgumentType]
    )


def _quadrature(
    scene: SyntheticScene, ray: Ray, t_near: float, t_far: float, count: int
) -> tuple[np.ndarray, float, float]:
    """Integrate colour, depth and opacity with fine midpoint steps."""
    step = (t_far - t_near) / count
    t = t_near + (np.arange(count) + 0.5) * step
    points = ray.at(t)
    sigma = np.zeros(count)
    weighted = np.zeros((count, 3))
    for box in scene.boxes:
        inside = box.contains(points)
        sigma += np.where(inside, box.density, 0.0)
        weighted += np.where(inside, box.density, 0.0)[:, None] * np.asarray(
            box.color
        )
    alpha = -np.expm1(-sigma * step)
    transmittance = np.exp(-(np.cumsum(sigma * step) - sigma * step))
    weights = transmittance * alpha
    colour = weighted / np.where(sigma > 0.0, sigma, 1.0)[:, None]
    return (
        np.sum(weights[:, None] * colour, axis=0),
        float(np.sum(weights * t)),
        float(np.sum(weights)),
    )


def test_slab_entry_and_exit() -> None:
    """A ray along the x axis enters and leaves at the box faces."""
    entry, leave = slab_intersect(ORIGIN, X_AXIS, _slab(1.0, 2.0))
    assert float(entry) == pytest.approx(1.0)
    assert float(leave) == pytest.approx(2.0)


def test_slab_behind_and_parallel_rays_miss() -> None:
    """Boxes behind the origin or beside a parallel ray are missed."""
    box = _slab(1.0, 2.0)
    entry, leave = slab_intersect(ORIGIN, -X_AXIS, box)
    assert float(leave) < max(float(entry), 0.0)
    entry, leave = slab_intersect(np.array([0.0, 5.0, 0.0]), X_AXIS, box)
    assert float(leave) < float(entry)


def test_transmittance_through_one_box() -> None:
    """A unit-length box of density two attenuates by ``exp(-2)``."""
    scene = SyntheticScene(boxes=(_slab(1.0, 2.0),))
    transmittance = analytic_transmittance(Ray(ORIGIN, X_AXIS), scene)
    np.testing.assert_allclose(
        transmittance([0.5, 1.5, 3.0]), [1.0, math.exp(-1.0), math.exp(-2.0)]
    )


def test_transmittance_through_two_boxes() -> None:
    """Optical depths of disjoint boxes add."""
    scene = SyntheticScene(boxes=(_slab(1.0, 2.0), _slab(2.5, 3.5)))
    transmittance = analytic_transmittance(Ray(ORIGIN, X_AXIS), scene)
    assert float(transmittance(4.0)) == pytest.approx(math.exp(-4.0))


def test_analytic_render_matches_quadrature() -> None:
    """Closed-form integrals agree with a fine numeric integration."""
    scene = SyntheticScene(
        boxes=(
            _slab(1.0, 2.0, density=1.5, color=(0.9, 0.1, 0.1)),
            _slab(1.5, 3.0, density=0.75, color=(0.1, 0.2, 0.8)),
        )
    )
    direction = np.array([1.0, 0.05, 0.02])
    direction /= np.linalg.norm(direction)
    origin = np.array([0.0, 0.1, 0.2])
    exact = analytic_render(scene, origin, direction, 0.5, 6.0)
    colour, depth, opacity = _quadrature(
        scene, Ray(origin, direction), 0.5, 6.0, 40_000
    )
    np.testing.assert_allclose(exact.color, colour, atol=1e-3)
    assert float(exact.depth) == pytest.approx(depth, abs=1e-3)
    assert float(exact.opacity) == pytest.approx(opacity, abs=1e-3)


def test_analytic_render_of_empty_scene() -> None:
    """Without boxes every integral is zero."""
    result = analytic_render(SyntheticScene(), ORIGIN, X_AXIS, 0.5, 6.0)
    assert float(result.opacity) == 0.0
    assert result.color.shape == (3,)


def test_first_hit_picks_the_nearest_box() -> None:
    """Rays report the closest dense surface or no hit."""
    scene = SyntheticScene(
        boxes=(_slab(4.0, 5.0), _slab(2.0, 3.0), _slab(0.5, 1.0, density=0.0))
    )
    directions = np.array([X_AXIS, -X_AXIS])
    distance, index = first_hit(scene, ORIGIN, directions)
    np.testing.assert_allclose(distance, [2.0, 0.0])
    np.testing.assert_array_equal(index, [1, NO_HIT])


def test_first_hit_from_inside_a_box() -> None:
    """A ray starting inside a box hits it at the near distance."""
    scene = SyntheticScene(boxes=(_slab(-1.0, 1.0),))
    distance, index = first_hit(scene, ORIGIN, X_AXIS, t_near=0.25)
    assert float(distance) == pytest.approx(0.25)
    assert int(index) == 0


@pytest.mark.parametrize(
    ("yaw", "forward"),
    [(0.0, (1.0, 0.0, 0.0)), (math.pi / 2.0, (0.0, 1.0, 0.0))],
)
def test_yaw_pose_looks_along_yaw(yaw: float, forward: tuple[float, ...]) -> None:
    """The optical axis turns with yaw and the image y axis points down."""
    pose = yaw_pose(yaw, (1.0, 2.0, 3.0))
    np.testing.assert_allclose(pose[:3, 2], forward, atol=1e-12)
    np.testing.assert_allclose(pose[:3, 1], [0.0, 0.0, -1.0])
    np.testing.assert_allclose(pose[:3, 3], [1.0, 2.0, 3.0])


def test_ring_rig_names_and_splits() -> None:
    """Training cameras are numbered and the held-out camera comes last."""
    rig = ring_rig(RigSpec(cameras=3))
    assert [entry.name for entry in rig] == ["cam0", "cam1", "cam2", "holdout"]
    assert [entry.split for entry in rig] == ["train"] * 3 + ["holdout"]
    spacing = math.radians(60.0 - 10.0)
    np.testing.assert_allclose(
        rig[2].camera.rotation[:, 2],
        [math.cos(spacing), math.sin(spacing), 0.0],
        atol=1e-12,
    )


def test_ring_rig_without_holdout() -> None:
    """Disabling the held-out camera leaves only training cameras."""
    rig = ring_rig(RigSpec(cameras=1, holdout=False))
    assert [entry.split for entry in rig] == ["train"]


def test_virtual_poses_translate_left_right_and_up() -> None:
    """Virtual cameras move in the camera frame and keep their orientation."""
    camera = pinhole(8, 6, 60.0, yaw_pose(0.0, ORIGIN))
    moved = virtual_poses(camera, distance=1.0)
    np.testing.assert_allclose(
        [entry.origin for entry in moved],
        [[0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]],
        atol=1e-12,
    )
    for entry in moved:
        np.testing.assert_array_equal(entry.rotation, camera.rotation)


def test_sparse_depth_keeps_strided_central_rows() -> None:
    """Only every fourth row inside the central band survives."""
    kept = sparse_depth(np.ones((12, 3)), stride=4, band=0.75)
    np.testing.assert_array_equal(np.flatnonzero(kept[:, 0]), [4, 8])


def test_occupancy_truth_labels_wall_voxels() -> None:
    """Voxel centres inside the wall carry its class; all others are free."""
    scene = wall_scene()
    occupied, labels = occupancy_truth(scene, scene.occupancy)
    assert occupied.shape == (17, 16, 6)
    assert int(occupied.sum()) == 2 * 12 * 4
    assert set(np.unique(labels[occupied])) == {float(WALL_CLASS)}


def test_synth_scene_writes_targets(wall_manifest: Path) -> None:
    """Every camera gets its targets, and training cameras get virtual views."""
    root = wall_manifest.parent
    assert wall_manifest.name == MANIFEST_FILENAME
    for name in ("cam0_rgb.vxt", "cam1_semantic.vxt", "holdout_depth_dense.vxt"):
        assert (root / name).is_file()
    assert (root / "cam0_rgb.ppm").is_file()
    assert (root / "gt_occupancy.vxt").is_file()
    assert (root / SCENE_FILENAME).is_file()
    scene = open_scene(wall_manifest)
    manifest = scene.manifest
    assert [spec.name for spec in manifest.split("train")] == ["cam0", "cam1"]
    assert len(manifest.camera("cam0").virtual) == 3
    assert manifest.camera("holdout").virtual == ()
    assert manifest.camera("cam0").feature is None
    assert manifest.occupancy is not None
    assert manifest.occupancy.foreground_classes == (WALL_CLASS,)


def test_synth_targets_agree_with_each_other(wall_manifest: Path) -> None:
    """Hit pixels see the wall; missed pixels are black and unlabelled."""
    scene = open_scene(wall_manifest)
    spec = scene.manifest.camera("cam0")
    rgb = scene.read_target(spec, "rgb")
    depth = scene.read_target(spec, "depth_dense")
    labels = scene.read_target(spec, "semantic_mask")
    assert rgb is not None
    assert depth is not None
    assert labels is not None
    assert rgb.shape == (22, 24, 3)
    hit = depth > 0.0
    assert hit.any()
    assert not hit.all()
    assert float(depth[hit].min()) >= 3.0 - 1e-5
    np.testing.assert_array_equal(labels[hit], WALL_CLASS)
    np.testing.assert_array_equal(labels[~hit], OTHERS)
    np.testing.assert_array_equal(rgb[~hit], 0.0)


def test_feature_targets_follow_the_boxes(featured_manifest: Path) -> None:
    """Feature maps carry the feature of the first box hit."""
    scene = open_scene(featured_manifest)
    spec = scene.manifest.camera("cam1")
    feature = scene.read_target(spec, "feature")
    depth = scene.read_target(spec, "depth_dense")
    assert feature is not None
    assert depth is not None
    hit = depth > 0.0
    np.testing.assert_allclose(feature[hit], np.tile(WALL_FEATURE, (int(hit.sum()), 1)))
    np.testing.assert_array_equal(feature[~hit], 0.0)


def test_scene_toml_round_trip(tmp_path: Path) -> None:
    """A dumped scene description loads back unchanged."""
    scene = wall_scene((0.5, 1.5))
    path = dump_scene(scene, tmp_path / SCENE_FILENAME)
    assert load_scene(path) == scene


def test_scene_toml_reports_unknown_keys(tmp_path: Path) -> None:
    """Unknown keys and malformed TOML are description errors."""
    path = tmp_path / SCENE_FILENAME
    path.write_text("[rig]\nlenses = 3\n")
    with pytest.raises(SceneDescriptionError):
        load_scene(path)
    path.write_text("[rig\n")
    with pytest.raises(SceneDescriptionError):
        load_scene(path)


@pytest.mark.parametrize(
    ("box", "field"),
    [
        (Box(lower=(1.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), density=1.0), "max"),
        (Box(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), density=-1.0), "density"),
        (
            Box(
                lower=(0.0, 0.0, 0.0),
                upper=(1.0, 1.0, 1.0),
                density=1.0,
                color=(1.5, 0.0, 0.0),
            ),
            "color",
        ),
        (
            Box(
                lower=(0.0, 0.0, 0.0),
                upper=(1.0, 1.0, 1.0),
                density=1.0,
                class_id=OTHERS,
            ),
            "class_id",
        ),
    ],
)
def test_validate_scene_rejects_bad_boxes(box: Box, field: str) -> None:
    """Invalid boxes name the offending field."""
    with pytest.raises(SceneDescriptionError) as excinfo:
        validate_scene(SyntheticScene(boxes=(box,)))
    assert excinfo.value.field == field


def test_validate_scene_rejects_mixed_feature_widths() -> None:
    """Every box carries the same number of feature channels."""
    boxes = (_slab(1.0, 2.0, feature=(1.0, 2.0)), _slab(3.0, 4.0, feature=(1.0,)))
    with pytest.raises(SceneDescriptionError, match="feature"):
        validate_scene(SyntheticScene(boxes=boxes))


def test_validate_scene_rejects_odd_images() -> None:
    """Rig images need even sizes so they halve cleanly."""
    with pytest.raises(SceneDescriptionError):
        validate_scene(SyntheticScene(rig=RigSpec(width=15)))


def test_unlabelled_boxes_are_not_scored_as_others() -> None:
    """A box without a class gets the first real class, never ``OTHERS``."""
    box = Box(lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), density=1.0)
    assert box.class_id == 1
    assert box.class_id != OTHERS
    validate_scene(SyntheticScene(boxes=(box,)))
