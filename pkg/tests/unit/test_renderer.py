"""Tests for ray sampling, compositing and decoding."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from voxfield.autodiff import fd_check
from voxfield.autodiff.tape import value_of
from voxfield.errors import DomainError, ShapeError, ValidationError
from voxfield.geometry import Camera, Contraction, Ray, contract_distance
from voxfield.harness import (
    Box,
    SyntheticScene,
    analytic_render,
    analytic_transmittance,
    first_hit,
)
from voxfield.renderer import (
    WEIGHT_FLOOR,
    Decoder,
    SamplingPlan,
    cell_deltas,
    decode,
    importance_draws,
    pixel_shuffle,
    render_image,
    render_ray,
    sample_importance,
    sample_uniform,
    samples_at,
    two_phase_samples,
)
from voxfield.voxelgrid import DualOctree, SparseGrid
from voxfield.voxelgrid import morton

UNIT = Contraction(p_inner=np.ones(3), alpha=0.8)
FORWARD = Ray(origin=np.zeros(3), direction=np.array([0.0, 0.0, 1.0]))
COLOUR = np.array([1.0, 0.5, 0.25])

Layer = tuple[float, tuple[float, float, float]]


def _filled_octree(density: float | np.ndarray) -> DualOctree:
    """Occupy all eight level-one cells so every point has ``density``."""
    cells = np.array(list(itertools.product((0, 1), repeat=3)))
    keys = np.sort(morton.encode(cells))
    fine = SparseGrid(
        level=1,
        keys=keys,
        features=np.tile(COLOUR, (8, 1)),
        density=np.broadcast_to(np.asarray(density, dtype=np.float64), (8,)).copy(),
        count=np.ones(8, dtype=np.int64),
    )
    return DualOctree(fine=fine, coarse=SparseGrid.empty(0, 0))


def _layered_octree(below: Layer, above: Layer) -> DualOctree:
    """Occupy all level-one cells with ``(density, colour)`` split at ``z = 0``."""
    cells = np.array(list(itertools.product((0, 1), repeat=3)))
    order = np.argsort(morton.encode(cells))
    cells = cells[order]
    upper = cells[:, 2] == 1
    density = np.where(upper, above[0], below[0])
    features = np.where(upper[:, None], np.asarray(above[1]), np.asarray(below[1]))
    fine = SparseGrid(
        level=1,
        keys=morton.encode(cells),
        features=features.astype(np.float64),
        density=density.astype(np.float64),
        count=np.ones(8, dtype=np.int64),
    )
    return DualOctree(fine=fine, coarse=SparseGrid.empty(0, 0))


def _layered_scene(below: Layer, above: Layer) -> SyntheticScene:
    """Return the box scene matching :func:`_layered_octree` near the origin."""
    return SyntheticScene(
        boxes=(
            Box(
                lower=(-5.0, -5.0, -5.0),
                upper=(5.0, 5.0, 0.0),
                density=below[0],
                color=below[1],
            ),
            Box(
                lower=(-5.0, -5.0, 0.0),
                upper=(5.0, 5.0, 5.0),
                density=above[0],
                color=above[1],
            ),
        )
    )


def test_empty_octree_renders_nothing() -> None:
    """Empty space gives zero feature, depth and opacity."""
    octree = DualOctree.empty(3, 1, 3)
    samples = samples_at(FORWARD, UNIT, np.linspace(0.1, 2.0, 6))
    feature, depth, opacity = render_ray(octree, samples)
    np.testing.assert_array_equal(value_of(feature), 0.0)
    assert float(value_of(depth)) == 0.0
    assert float(value_of(opacity)) == 0.0


def test_constant_density_matches_closed_form() -> None:
    """A homogeneous medium absorbs ``1 - exp(-sigma * (t_far - t_near))``."""
    t = np.linspace(0.25, 1.75, 4)
    samples = samples_at(FORWARD, UNIT, t, bounds=(0.0, 2.0))
    np.testing.assert_allclose(samples.deltas, 0.5)
    feature, depth, opacity = render_ray(_filled_octree(0.5), samples)
    expected = 1.0 - math.exp(-0.5 * 2.0)
    assert float(value_of(opacity)) == pytest.approx(expected, rel=1e-12)
    np.testing.assert_allclose(value_of(feature), expected * COLOUR, rtol=1e-12)
    weights = [
        math.exp(-0.25 * index) * (1.0 - math.exp(-0.25)) for index in range(4)
    ]
    assert float(value_of(depth)) == pytest.approx(
        sum(w * ti for w, ti in zip(weights, t, strict=True)), rel=1e-12
    )


def test_cell_deltas_partition_the_range() -> None:
    """Widths run from ``t_near`` through neighbour midpoints to ``t_far``."""
    np.testing.assert_allclose(
        cell_deltas([1.0, 2.0, 4.0], 0.5, 5.0), [1.0, 1.5, 2.0]
    )


@pytest.mark.parametrize("count", [32, 64, 128, 256, 512])
def test_two_phase_deltas_cover_the_ray(count: int) -> None:
    """Uniform and importance samples together integrate the whole range."""
    plan = SamplingPlan(
        t_near=0.1, t_far=3.0, uniform_samples=count, importance_samples=count // 2
    )
    samples = two_phase_samples(_filled_octree(0.5), UNIT, FORWARD, plan)
    assert len(samples) == count + count // 2
    assert float(np.sum(samples.deltas)) == pytest.approx(2.9, abs=1e-12)
    assert np.all(samples.deltas >= 0.0)


def test_constant_density_converges_with_sample_count() -> None:
    """Two-phase renders approach the closed form as samples double."""
    density, t_near, t_far = 0.5, 0.1, 3.0
    octree = _filled_octree(density)
    medium = SyntheticScene(
        boxes=(
            Box(
                lower=(-5.0, -5.0, -5.0),
                upper=(5.0, 5.0, 5.0),
                density=density,
                color=(1.0, 0.5, 0.25),
            ),
        )
    )
    exact = analytic_render(medium, FORWARD.origin, FORWARD.direction, t_near, t_far)
    assert float(exact.opacity) == pytest.approx(
        1.0 - math.exp(-density * (t_far - t_near)), rel=1e-12
    )
    opacity_errors: list[float] = []
    depth_errors: list[float] = []
    for count in (32, 64, 128, 256, 512):
        plan = SamplingPlan(
            t_near=t_near,
            t_far=t_far,
            uniform_samples=count,
            importance_samples=count // 2,
        )
        samples = two_phase_samples(octree, UNIT, FORWARD, plan)
        feature, depth, opacity = render_ray(octree, samples)
        opacity_errors.append(abs(float(value_of(opacity)) - float(exact.opacity)))
        depth_errors.append(abs(float(value_of(depth)) - float(exact.depth)))
        np.testing.assert_allclose(value_of(feature), exact.color, atol=1e-12)
    assert max(opacity_errors) < 1e-12
    assert depth_errors[-1] < 1e-3
    assert depth_errors[-1] < depth_errors[0] / 4.0


def test_layered_field_matches_analytic_transmittance() -> None:
    """A two-layer field renders the analytic opacity, colour and depth."""
    below: Layer = (0.3, (0.1, 0.6, 0.9))
    above: Layer = (1.2, (0.9, 0.2, 0.1))
    octree = _layered_octree(below, above)
    scene = _layered_scene(below, above)
    ray = Ray(origin=np.array([0.0, 0.0, -1.0]), direction=FORWARD.direction)
    t_near, t_far = 0.2, 1.8
    transmittance = analytic_transmittance(ray, scene, t_start=t_near)
    exact = analytic_render(scene, ray.origin, ray.direction, t_near, t_far)
    samples = sample_uniform(ray, UNIT, t_near, t_far, 512, linear=True)
    feature, depth, opacity = render_ray(octree, samples)
    assert float(value_of(opacity)) == pytest.approx(
        1.0 - float(transmittance(t_far)), abs=1e-12
    )
    np.testing.assert_allclose(value_of(feature), exact.color, atol=1e-12)
    assert float(value_of(depth)) == pytest.approx(float(exact.depth), abs=1e-5)


def test_opaque_slab_stops_rays_at_its_face() -> None:
    """A near-infinite density absorbs everything at the first surface."""
    below: Layer = (0.0, (0.0, 0.0, 0.0))
    above: Layer = (1e6, (1.0, 0.5, 0.25))
    octree = _layered_octree(below, above)
    ray = Ray(origin=np.array([0.0, 0.0, -1.0]), direction=FORWARD.direction)
    surface, index = first_hit(
        _layered_scene(below, above), ray.origin, ray.direction
    )
    assert int(index) == 1
    plan = SamplingPlan(
        t_near=0.2, t_far=1.8, uniform_samples=64, importance_samples=32, linear=True
    )
    samples = two_phase_samples(octree, UNIT, ray, plan)
    _, depth, opacity = render_ray(octree, samples)
    assert float(value_of(opacity)) == pytest.approx(1.0, abs=1e-9)
    assert abs(float(value_of(depth)) - float(surface)) < 1.6 / 64


def test_render_gradients_match_finite_differences() -> None:
    """Opacity and depth differentiate correctly with respect to density."""
    t = np.linspace(0.0, 2.0, 5)
    samples = samples_at(FORWARD, UNIT, t)

    def _render(density: object) -> object:
        octree = _filled_octree(0.0)
        octree = DualOctree(
            fine=octree.fine.with_payload(density=density), coarse=octree.coarse
        )
        _, depth, _ = render_ray(octree, samples)
        return depth

    density = np.random.default_rng(0).uniform(0.1, 1.0, size=8)
    assert fd_check(_render, [density]) < 1e-4


def test_uniform_samples_sit_at_midpoints() -> None:
    """Without jitter linear samples are the sub-interval midpoints."""
    samples = sample_uniform(FORWARD, UNIT, 0.0, 4.0, 4, linear=True)
    np.testing.assert_allclose(samples.t_values, [0.5, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(samples.deltas, 1.0)


def test_contracted_samples_stay_in_range() -> None:
    """Contracted-space samples are sorted and inside the depth range."""
    rng = np.random.default_rng(1)
    for jitter in (False, True):
        samples = sample_uniform(
            FORWARD, UNIT, 0.5, 80.0, 32, jitter=jitter, rng=rng
        )
        assert np.all(np.diff(samples.t_values) > 0.0)
        assert samples.t_values[0] >= 0.5
        assert samples.t_values[-1] <= 80.0
        assert np.all(np.abs(samples.positions) < 1.0)


def test_contracted_samples_thin_out_with_distance() -> None:
    """Gaps grow beyond the inner range."""
    samples = sample_uniform(FORWARD, UNIT, 0.1, 50.0, 16)
    gaps = np.diff(samples.t_values)
    assert gaps[-1] > gaps[0]


@pytest.mark.parametrize(
    ("t_near", "t_far", "count", "error"),
    [
        (0.0, 1.0, 1, ValidationError),
        (2.0, 1.0, 4, DomainError),
        (-1.0, 1.0, 4, DomainError),
    ],
)
def test_sampling_rejects_bad_ranges(
    t_near: float, t_far: float, count: int, error: type[Exception]
) -> None:
    """Degenerate ranges and counts are refused."""
    with pytest.raises(error):
        sample_uniform(FORWARD, UNIT, t_near, t_far, count)


def test_zero_weights_draw_uniformly() -> None:
    """All-zero weights spread draws evenly over the covered interval."""
    draws = importance_draws(
        [1.0, 2.0, 3.0], [0.0, 0.0, 0.0], 3, t_near=0.5, t_far=3.5
    )
    np.testing.assert_allclose(draws, [1.0, 2.0, 3.0])


def test_peaked_weights_concentrate_draws() -> None:
    """A single heavy sample attracts every stratified draw."""
    draws = importance_draws(
        [1.0, 2.0, 3.0], [0.0, 1.0, 0.0], 8, t_near=0.5, t_far=3.5
    )
    assert np.all((draws >= 1.5 - 1e-3) & (draws <= 2.5 + 1e-3))


def test_importance_rejects_negative_weights() -> None:
    """Weights must be non-negative."""
    with pytest.raises(DomainError):
        importance_draws([1.0, 2.0], [0.5, -0.1], 4, t_near=0.0, t_far=3.0)


def test_merged_samples_strictly_increase() -> None:
    """Draws coinciding with coarse samples are separated."""
    coarse = samples_at(FORWARD, UNIT, [1.0, 2.0, 3.0])
    merged = sample_importance(
        FORWARD, UNIT, coarse, np.zeros(3), 3, t_near=0.5, t_far=3.5
    )
    assert len(merged) == 6
    assert np.all(np.diff(merged.t_values) > 0.0)


@pytest.mark.parametrize("spacing", ["linear", "contracted"])
def test_jittered_uniform_samples_fill_every_stratum(spacing: str) -> None:
    """Each of the 64 equal sub-intervals holds exactly one jittered sample."""
    linear = spacing == "linear"
    t_near, t_far, count = 0.2, 40.0, 64
    samples = sample_uniform(
        FORWARD,
        UNIT,
        t_near,
        t_far,
        count,
        jitter=True,
        rng=np.random.default_rng(11),
        linear=linear,
    )
    u = samples.t_values
    lo, hi = t_near, t_far
    if not linear:
        inner, alpha = UNIT.horizontal_extent, UNIT.alpha
        u = contract_distance(u, inner, alpha)
        lo, hi = contract_distance(np.array([t_near, t_far]), inner, alpha)
    counts, _ = np.histogram(u, bins=np.linspace(lo, hi, count + 1))
    np.testing.assert_array_equal(counts, np.ones(count))


def test_random_importance_draws_follow_the_weights() -> None:
    """Random draws land in each cell in proportion to its weight."""
    t = np.arange(1.0, 11.0)
    weights = np.arange(1.0, 11.0)
    total = 10_000
    draws = importance_draws(
        t, weights, total, t_near=0.5, t_far=10.5, rng=np.random.default_rng(5)
    )
    observed, _ = np.histogram(draws, bins=np.arange(0.5, 11.0))
    pdf = weights + WEIGHT_FLOOR
    expected = total * pdf / pdf.sum()
    chi_squared = float(np.sum((observed - expected) ** 2 / expected))
    # 99.9th percentile of chi-squared with nine degrees of freedom.
    assert chi_squared < 27.88


def _camera() -> Camera:
    return Camera(width=4, height=3, fx=4.0, fy=4.0, cx=2.0, cy=1.5)


@pytest.mark.parametrize("workers", [2, 8])
def test_render_image_ignores_worker_count(workers: int) -> None:
    """Chunked renders are identical for any worker count."""
    plan = SamplingPlan(
        t_near=0.1, t_far=3.0, uniform_samples=8, importance_samples=4
    )
    octree = _filled_octree(np.linspace(0.1, 0.8, 8))
    single = render_image(octree, UNIT, _camera(), plan, workers=1, chunk_rows=1)
    pooled = render_image(
        octree, UNIT, _camera(), plan, workers=workers, chunk_rows=1
    )
    for name, image in single.to_tensors().items():
        np.testing.assert_array_equal(image, pooled.to_tensors()[name])
    assert single.to_tensors()["rgb"].shape == (6, 8, 3)
    assert single.to_tensors()["feature"].shape == (3, 4, 3)


def test_identity_decoder_clamps_and_upsamples() -> None:
    """The identity path keeps three clamped channels at twice the size."""
    rgb = value_of(decode(np.array([[[2.0, -1.0, 0.5, 9.0]]])))
    assert rgb.shape == (2, 2, 3)
    np.testing.assert_array_equal(rgb, np.broadcast_to([1.0, 0.0, 0.5], (2, 2, 3)))


def test_pixel_shuffle_layout() -> None:
    """Channel ``c * 4 + i * 2 + j`` lands at block offset ``(i, j)``."""
    shuffled = value_of(pixel_shuffle(np.arange(12.0).reshape(1, 1, 12)))
    for i, j, c in itertools.product(range(2), range(2), range(3)):
        assert shuffled[i, j, c] == c * 4 + i * 2 + j


def test_learned_decoder_starts_at_grey() -> None:
    """Zero-initialised weights decode every pixel to ``0.5``."""
    decoder = Decoder.learned(5)
    rgb = value_of(decoder(np.random.default_rng(0).normal(size=(3, 2, 5))))
    assert rgb.shape == (6, 4, 3)
    np.testing.assert_allclose(rgb, 0.5)
    assert len(decoder.parameters()) == 2


def test_decoder_checks_input_width() -> None:
    """Too few channels or a mismatched learned width is a shape error."""
    with pytest.raises(ShapeError):
        decode(np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        decode(np.zeros((2, 2, 4)), Decoder.learned(5))
