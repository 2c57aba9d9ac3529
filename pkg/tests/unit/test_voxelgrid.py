"""Tests for octree fusion, sparse convolution, queries and storage."""

from __future__ import annotations

import typing as typ

import numpy as np
import pytest

from tests.helpers.dense_grid import convolve, lookup_points, pool_points
from voxfield.autodiff.tape import value_of
from voxfield.errors import DomainError, ShapeError, ValidationError
from voxfield.frustum import LiftedPoints
from voxfield.geometry import Contraction, cell_centres, contract
from voxfield.voxelgrid import (
    DualOctree,
    SparseGrid,
    build,
    downsample_concat,
    load_octree,
    neighbour_table,
    query_density,
    query_feature,
    save_octree,
    sparse_conv,
)
from voxfield.voxelgrid import morton
from voxfield.voxelgrid.conv import identity_kernel

if typ.TYPE_CHECKING:
    from pathlib import Path

UNIT = Contraction(p_inner=np.ones(3), alpha=0.8)


def _points(positions: list[list[float]], features: list[list[float]]) -> LiftedPoints:
    return LiftedPoints(
        positions=np.array(positions, dtype=np.float64),
        features=np.array(features, dtype=np.float64),
        densities=np.full(len(positions), 0.5),
    )


def _grid(
    level: int, cells: list[tuple[int, int, int]], features: list[float]
) -> SparseGrid:
    keys = morton.encode(np.array(cells))
    order = np.argsort(keys)
    return SparseGrid(
        level=level,
        keys=keys[order],
        features=np.array(features, dtype=np.float64)[order].reshape(-1, 1),
        density=np.ones(len(cells)),
        count=np.ones(len(cells), dtype=np.int64),
    )


def test_points_in_one_cell_are_averaged() -> None:
    """Two points sharing a cell give their mean and a count of two."""
    points = _points([[0.1, 0.1, 0.1], [0.12, 0.1, 0.1]], [[1.0, 4.0], [3.0, 0.0]])
    octree = build(points, UNIT, fine_level=3, coarse_level=1)
    assert len(octree.fine) == 1
    np.testing.assert_allclose(value_of(octree.fine.features), [[2.0, 2.0]])
    assert octree.fine.count.tolist() == [2]


def test_single_point_occupies_one_cell_per_level() -> None:
    """One point makes one fine and one coarse cell."""
    octree = build(_points([[0.3, -0.2, 0.5]], [[1.0]]), UNIT, 5, 2)
    assert (len(octree.fine), len(octree.coarse)) == (1, 1)
    assert octree.fine.level == 5
    assert octree.coarse.level == 2


def test_low_density_points_are_dropped() -> None:
    """Points at or below the density floor never create cells."""
    points = LiftedPoints(
        positions=np.zeros((2, 3)),
        features=np.ones((2, 1)),
        densities=np.array([0.0, 1e-9]),
    )
    octree = build(points, UNIT, 3, 1)
    assert len(octree.fine) == 0
    assert len(octree.coarse) == 0


def test_build_rejects_inverted_levels() -> None:
    """The fine level must be strictly finer than the coarse one."""
    with pytest.raises(ValidationError):
        build(_points([[0.0, 0.0, 0.0]], [[1.0]]), UNIT, 3, 3)


def test_build_matches_dictionary_pooling() -> None:
    """Sparse pooling equals a per-point dictionary reference."""
    rng = np.random.default_rng(5)
    points = LiftedPoints(
        positions=rng.uniform(-2.0, 2.0, size=(400, 3)),
        features=rng.normal(size=(400, 3)),
        densities=rng.uniform(0.0, 1.0, size=400),
    )
    octree = build(points, UNIT, fine_level=3, coarse_level=2)
    for grid in (octree.fine, octree.coarse):
        reference = pool_points(points, UNIT, grid.level)
        assert len(grid) == len(reference)
        features = value_of(grid.features)
        density = value_of(grid.density)
        for row, cell in enumerate(grid.cells()):
            expected = reference[(int(cell[0]), int(cell[1]), int(cell[2]))]
            np.testing.assert_allclose(features[row], expected.feature, atol=1e-12)
            assert density[row] == pytest.approx(expected.density)
            assert grid.count[row] == expected.count


def _random_points(seed: int, count: int) -> LiftedPoints:
    rng = np.random.default_rng(seed)
    return LiftedPoints(
        positions=rng.uniform(-2.0, 2.0, size=(count, 3)),
        features=rng.normal(size=(count, 3)),
        densities=rng.uniform(0.0, 1.0, size=count),
    )


def test_build_ignores_point_order() -> None:
    """Shuffling the points leaves every cell and payload unchanged."""
    points = _random_points(8, 500)
    order = np.random.default_rng(9).permutation(len(points))
    shuffled = LiftedPoints(
        positions=points.positions[order],
        features=value_of(points.features)[order],
        densities=value_of(points.densities)[order],
    )
    first = build(points, UNIT, fine_level=4, coarse_level=2)
    second = build(shuffled, UNIT, fine_level=4, coarse_level=2)
    for name in ("fine", "coarse"):
        left, right = getattr(first, name), getattr(second, name)
        np.testing.assert_array_equal(left.keys, right.keys)
        np.testing.assert_array_equal(left.count, right.count)
        np.testing.assert_allclose(
            value_of(left.features), value_of(right.features), atol=1e-12
        )
        np.testing.assert_allclose(
            value_of(left.density), value_of(right.density), atol=1e-12
        )


def test_queries_match_a_dense_reference() -> None:
    """Every level-five cell centre and random point reads the pooled payload."""
    points = _random_points(12, 3000)
    octree = build(points, UNIT, fine_level=5, coarse_level=3)
    fine = pool_points(points, UNIT, 5)
    coarse = pool_points(points, UNIT, 3)
    axis = np.arange(32)
    cells = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), -1).reshape(-1, 3)
    rng = np.random.default_rng(13)
    s = np.concatenate([cell_centres(cells, 5), rng.uniform(-1.0, 1.0, (10_000, 3))])
    density, features = lookup_points(fine, coarse, s, (5, 3), points.width)
    np.testing.assert_allclose(value_of(query_density(octree, s)), density, atol=1e-12)
    np.testing.assert_allclose(
        value_of(query_feature(octree, s)), features, atol=1e-12
    )


def test_build_on_a_pattern_keeps_its_cells() -> None:
    """Pattern cells without points get zero payload."""
    seeds = _points([[0.1, 0.1, 0.1], [-0.6, 0.0, 0.0]], [[1.0], [2.0]])
    first = build(seeds, UNIT, 3, 1)
    again = build(_points([[0.1, 0.1, 0.1]], [[7.0]]), UNIT, 3, 1, pattern=first)
    np.testing.assert_array_equal(again.fine.keys, first.fine.keys)
    assert sorted(again.fine.count.tolist()) == [0, 1]
    assert sorted(value_of(again.fine.features)[:, 0].tolist()) == [0.0, 7.0]


def test_downsample_concat_zero_fills() -> None:
    """Pooled fine features are appended with zeros on the missing side."""
    fine = _grid(2, [(0, 0, 0), (1, 1, 1), (3, 3, 3)], [2.0, 4.0, 9.0])
    coarse = _grid(1, [(1, 1, 1), (1, 0, 0)], [5.0, 6.0])
    merged = downsample_concat(DualOctree(fine=fine, coarse=coarse)).coarse
    assert merged.width == 2
    rows = {tuple(cell): row for row, cell in enumerate(merged.cells().tolist())}
    features = value_of(merged.features)
    np.testing.assert_array_equal(features[rows[(0, 0, 0)]], [0.0, 3.0])
    np.testing.assert_array_equal(features[rows[(1, 1, 1)]], [5.0, 9.0])
    np.testing.assert_array_equal(features[rows[(1, 0, 0)]], [6.0, 0.0])
    assert merged.count[rows[(0, 0, 0)]] == 2


def test_neighbour_table_marks_missing_neighbours() -> None:
    """Absent and out-of-grid neighbours are ``-1``; the centre is the cell."""
    grid = _grid(2, [(0, 0, 0), (1, 0, 0)], [1.0, 2.0])
    table = neighbour_table(grid)
    assert table.shape == (27, 2)
    np.testing.assert_array_equal(table[13], [0, 1])
    assert np.count_nonzero(table >= 0) == 4


def test_identity_kernel_preserves_features() -> None:
    """The identity kernel leaves every feature unchanged."""
    grid = _grid(3, [(0, 0, 0), (1, 0, 0), (4, 4, 4)], [1.0, -2.0, 3.5])
    result = sparse_conv(grid, identity_kernel(1, 1), np.zeros(1))
    np.testing.assert_array_equal(value_of(result.features), value_of(grid.features))
    np.testing.assert_array_equal(result.keys, grid.keys)


def test_isolated_cell_sees_only_itself() -> None:
    """An all-ones kernel on an isolated cell returns its own feature."""
    grid = _grid(3, [(4, 4, 4)], [5.0])
    result = sparse_conv(grid, np.ones((3, 3, 3, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(value_of(result.features), [[5.0]])


def test_line_of_cells_sums_neighbours() -> None:
    """Three cells in a row sum their present neighbours."""
    grid = _grid(3, [(0, 0, 0), (1, 0, 0), (2, 0, 0)], [1.0, 2.0, 3.0])
    result = sparse_conv(grid, np.ones((3, 3, 3, 1, 1)), np.zeros(1))
    rows = {tuple(cell): row for row, cell in enumerate(result.cells().tolist())}
    features = value_of(result.features)[:, 0]
    assert [features[rows[(x, 0, 0)]] for x in range(3)] == [3.0, 6.0, 5.0]


def test_sparse_conv_matches_dictionary_convolution() -> None:
    """Random kernels agree with a neighbour loop over a dictionary."""
    rng = np.random.default_rng(8)
    cells = {tuple(int(v) for v in cell) for cell in rng.integers(0, 4, size=(20, 3))}
    ordered = sorted(cells)
    keys = morton.encode(np.array(ordered))
    order = np.argsort(keys)
    features = rng.normal(size=(len(ordered), 2))
    grid = SparseGrid(
        level=2,
        keys=keys[order],
        features=features[order],
        density=np.ones(len(ordered)),
        count=np.ones(len(ordered), dtype=np.int64),
    )
    kernel = rng.normal(size=(3, 3, 3, 2, 3))
    bias = rng.normal(size=3)
    result = sparse_conv(grid, kernel, bias)
    reference = convolve(
        {cell: features[index] for index, cell in enumerate(ordered)}, kernel, bias
    )
    for row, cell in enumerate(result.cells().tolist()):
        np.testing.assert_allclose(
            value_of(result.features)[row], reference[tuple(cell)], atol=1e-12
        )


def test_sparse_conv_checks_kernel_width() -> None:
    """Kernels must match the grid's channel count."""
    grid = _grid(2, [(0, 0, 0)], [1.0])
    with pytest.raises(ShapeError):
        sparse_conv(grid, np.ones((3, 3, 3, 2, 1)), np.zeros(1))


def _query_octree() -> DualOctree:
    fine = _grid(3, [(4, 4, 4)], [1.5])
    coarse = _grid(1, [(1, 1, 1)], [7.0])
    return DualOctree(
        fine=fine.with_payload(density=np.array([2.0])),
        coarse=coarse.with_payload(density=np.array([0.25])),
    )


def test_query_density_prefers_fine_then_coarse() -> None:
    """Fine cells win, coarse cells fill in and empty space is zero."""
    octree = _query_octree()
    points = np.array(
        [
            cell_centres(np.array([4, 4, 4]), 3),
            cell_centres(np.array([7, 7, 7]), 3),
            cell_centres(np.array([0, 0, 0]), 3),
        ]
    )
    densities = value_of(query_density(octree, points))
    np.testing.assert_array_equal(densities, [2.0, 0.25, 0.0])


def test_query_feature_concatenates_levels() -> None:
    """Features join fine then coarse, with zeros for missing cells."""
    octree = _query_octree()
    points = np.array(
        [cell_centres(np.array([4, 4, 4]), 3), cell_centres(np.array([0, 0, 0]), 3)]
    )
    features = value_of(query_feature(octree, points))
    np.testing.assert_array_equal(features, [[1.5, 7.0], [0.0, 0.0]])


def test_query_keeps_leading_shape() -> None:
    """Batched queries keep the batch dimensions of their points."""
    octree = _query_octree()
    s = np.zeros((2, 5, 3))
    assert value_of(query_density(octree, s)).shape == (2, 5)
    assert value_of(query_feature(octree, s)).shape == (2, 5, 2)


def test_query_of_built_point_returns_its_density() -> None:
    """A fused point is found again at its own contracted position."""
    octree = build(_points([[0.2, 0.3, -0.4]], [[1.0]]), UNIT, 6, 3)
    s = contract(UNIT, [0.2, 0.3, -0.4])
    assert float(value_of(query_density(octree, s))) == 0.5


def test_morton_round_trip() -> None:
    """Keys decode to the coordinates they were built from."""
    rng = np.random.default_rng(2)
    cells = rng.integers(0, 1 << 12, size=(200, 3))
    np.testing.assert_array_equal(morton.decode(morton.encode(cells)), cells)
    assert int(morton.encode([1, 0, 0])) == 1
    assert int(morton.encode([0, 1, 0])) == 2
    assert int(morton.encode([0, 0, 1])) == 4


def test_morton_rejects_negative_cells() -> None:
    """Negative coordinates have no key."""
    with pytest.raises(DomainError):
        morton.encode([-1, 0, 0])


def test_octree_storage_round_trip(tmp_path: Path) -> None:
    """Saved octrees reload with identical cells and payload."""
    rng = np.random.default_rng(3)
    points = LiftedPoints(
        positions=rng.uniform(-1.0, 1.0, size=(50, 3)),
        features=rng.normal(size=(50, 2)).astype(np.float32).astype(np.float64),
        densities=rng.uniform(0.1, 1.0, size=50).astype(np.float32).astype(np.float64),
    )
    octree = build(points, UNIT, 4, 2)
    restored = load_octree(save_octree(octree, tmp_path / "octree"))
    for name in ("fine", "coarse"):
        original: SparseGrid = getattr(octree, name)
        loaded: SparseGrid = getattr(restored, name)
        assert loaded.level == original.level
        np.testing.assert_array_equal(loaded.keys, original.keys)
        np.testing.assert_array_equal(loaded.count, original.count)
        np.testing.assert_allclose(
            value_of(loaded.features), value_of(original.features), rtol=1e-6
        )
