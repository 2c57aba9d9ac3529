"""Named finite-difference fixtures for every differentiable operation.

Each suite builds a function and its inputs from a seeded generator. The
``gradcheck`` command and the unit tests run every suite on several seeds
and compare tape gradients with central differences.
"""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.errors import ValidationError
from voxfield.frustum import expected_depth, occupancy_weights
from voxfield.geometry import Contraction, Ray
from voxfield.objectives.losses import (
    loss_density_entropy,
    loss_depth,
    mean_absolute_error,
)
from voxfield.renderer.render import render_rays
from voxfield.renderer.sampling import samples_at
from voxfield.voxelgrid import morton
from voxfield.voxelgrid.grid import DualOctree, SparseGrid

from . import ops
from .gradcheck import DEFAULT_STEP, Differentiable, fd_check
from .ops import REGISTERED_OPS

if typ.TYPE_CHECKING:
    from collections import abc as cabc

LOGGER = logging.getLogger(__name__)

DEFAULT_TOLERANCE: typ.Final[float] = 1e-3
DEFAULT_FIXTURES: typ.Final[int] = 3
PIPELINE_SUITES: typ.Final[tuple[str, ...]] = (
    "occupancy_weights",
    "expected_depth",
    "ray_to_loss",
)

Fixture = tuple[Differentiable, tuple[np.ndarray, ...]]
SuiteBuilder = typ.Callable[[np.random.Generator], Fixture]


@dc.dataclass(frozen=True, slots=True)
class SuiteResult:
    """Outcome of one suite on one fixture seed."""

    suite: str
    seed: int
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        """Return whether the relative error is within tolerance."""
        return self.error < self.tolerance


def _signed(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Return values with magnitude in ``[0.5, 1.5]`` and random sign."""
    signs = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return signs * rng.uniform(0.5, 1.5, size=shape)


def _positive(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(0.5, 2.0, size=shape)


def _unit(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=shape)


def _binary(name: str) -> SuiteBuilder:
    op = getattr(ops, name)

    def build(rng: np.random.Generator) -> Fixture:
        return op, (_unit(rng, (3, 4)), _unit(rng, (4,)))

    return build


def _unary(name: str, draw: typ.Callable[..., np.ndarray] = _unit) -> SuiteBuilder:
    op = getattr(ops, name)

    def build(rng: np.random.Generator) -> Fixture:
        return op, (draw(rng, (3, 5)),)

    return build


def _div(rng: np.random.Generator) -> Fixture:
    return ops.div, (_unit(rng, (3, 4)), _positive(rng, (3, 4)))


def _power(rng: np.random.Generator) -> Fixture:
    exponent = float(rng.uniform(1.5, 3.0))
    return (lambda x: ops.power(x, exponent)), (_positive(rng, (4, 3)),)


def _clip(rng: np.random.Generator) -> Fixture:
    bands = rng.integers(0, 3, size=(4, 4))
    centres = np.array([-1.1, 0.0, 1.1])[bands]
    values = centres + rng.uniform(-0.3, 0.3, size=bands.shape)
    return (lambda x: ops.clip(x, -0.5, 0.5)), (values,)


def _reduction(name: str) -> SuiteBuilder:
    op = getattr(ops, name)

    def build(rng: np.random.Generator) -> Fixture:
        axis = int(rng.integers(0, 3))
        return (lambda x: op(x, axis=axis)), (_unit(rng, (2, 3, 4)),)

    return build


def _reshape(rng: np.random.Generator) -> Fixture:
    return (lambda x: ops.reshape(x, (4, 3, 2))), (_unit(rng, (2, 3, 4)),)


def _transpose(rng: np.random.Generator) -> Fixture:
    axes = tuple(int(axis) for axis in rng.permutation(3))
    return (lambda x: ops.transpose(x, axes)), (_unit(rng, (2, 3, 4)),)


def _concat(rng: np.random.Generator) -> Fixture:
    axis = int(rng.integers(0, 2))
    shapes = ((3, 2), (3, 4)) if axis == 1 else ((2, 3), (4, 3))
    return (lambda a, b: ops.concat([a, b], axis=axis)), (
        _unit(rng, shapes[0]),
        _unit(rng, shapes[1]),
    )


def _getitem(rng: np.random.Generator) -> Fixture:
    rows = rng.integers(0, 5, size=6)
    cols = rng.integers(0, 4, size=6)
    return (lambda x: ops.getitem(x, (rows, cols))), (_unit(rng, (5, 4)),)


def _where(rng: np.random.Generator) -> Fixture:
    condition = rng.random((3, 4)) < 0.5
    return (lambda a, b: ops.where(condition, a, b)), (
        _unit(rng, (3, 4)),
        _unit(rng, (3, 4)),
    )


def _matmul(rng: np.random.Generator) -> Fixture:
    return ops.matmul, (_unit(rng, (2, 3, 4)), _unit(rng, (4, 5)))


def _gather_rows(rng: np.random.Generator) -> Fixture:
    index = rng.integers(0, 5, size=7)
    valid = rng.random(7) < 0.7
    return (lambda x: ops.gather_rows(x, index, valid)), (_unit(rng, (5, 3)),)


def _segment_mean(rng: np.random.Generator) -> Fixture:
    segments = rng.integers(0, 4, size=9)
    return (lambda x: ops.segment_mean(x, segments, 5)), (_unit(rng, (9, 2)),)


def _filter2d(rng: np.random.Generator) -> Fixture:
    kernel = rng.uniform(0.0, 1.0, size=(3, 3))
    return (lambda x: ops.filter2d(x, kernel)), (_unit(rng, (6, 5, 2)),)


def _conv2d(rng: np.random.Generator) -> Fixture:
    return (lambda x, w, b: ops.conv2d(x, w, b, padding=1)), (
        _unit(rng, (4, 5, 2)),
        _unit(rng, (3, 3, 2, 3)),
        _unit(rng, (3,)),
    )


def _sparse_conv3d(rng: np.random.Generator) -> Fixture:
    neighbours = rng.integers(-1, 6, size=(4, 6))
    return (lambda f, w, b: ops.sparse_conv3d(f, w, b, neighbours)), (
        _unit(rng, (6, 2)),
        _unit(rng, (4, 2, 3)),
        _unit(rng, (3,)),
    )


def _occupancy_weights(rng: np.random.Generator) -> Fixture:
    delta = rng.uniform(0.2, 1.0, size=(3, 8))
    return (lambda logits: occupancy_weights(ops.softplus(logits), delta)), (
        _unit(rng, (3, 8)),
    )


def _expected_depth(rng: np.random.Generator) -> Fixture:
    t = np.cumsum(rng.uniform(0.2, 1.0, size=(2, 8)), axis=-1)
    delta = np.diff(t, axis=-1, append=t[:, -1:] + 1.0)

    def depth(logits: object) -> object:
        weights = occupancy_weights(ops.softplus(logits), delta)
        return expected_depth(weights, t)[0]

    return depth, (_unit(rng, (2, 8)),)


def _full_grid(level: int, features: object, density: object) -> SparseGrid:
    side = 1 << level
    axis = np.arange(side)
    cells = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    keys = np.sort(morton.encode(cells.reshape(-1, 3)))
    return SparseGrid(
        level=level,
        keys=keys,
        features=features,
        density=density,
        count=np.ones(keys.shape[0], dtype=np.int64),
    )


def _ray_to_loss(rng: np.random.Generator) -> Fixture:
    """Render one ray through a dense two-level field and score it."""
    contraction = Contraction(p_inner=np.array([4.0, 4.0, 4.0]), alpha=0.8)
    heading = np.array([1.0, *rng.uniform(-0.2, 0.2, size=2)])
    ray = Ray(
        origin=np.array([-3.0, *rng.uniform(-1.0, 1.0, size=2)]),
        direction=heading / np.linalg.norm(heading),
    )
    samples = samples_at(ray, contraction, np.linspace(0.5, 6.0, 24))
    target_rgb = rng.uniform(0.5, 1.0, size=3)
    target_depth = np.array(11.0)
    coarse_features = rng.uniform(0.0, 0.3, size=(8, 3))
    coarse_density = rng.uniform(0.1, 0.5, size=8)

    def loss(fine_logits: object, fine_features: object) -> object:
        octree = DualOctree(
            fine=_full_grid(2, fine_features, ops.softplus(fine_logits)),
            coarse=_full_grid(1, coarse_features, coarse_density),
        )
        feature, depth, opacity = render_rays(octree, samples)
        rgb = ops.getitem(feature, slice(0, 3))
        return ops.add(
            ops.add(
                mean_absolute_error(rgb, target_rgb),
                loss_depth(ops.reshape(depth, (1,)), target_depth.reshape(1)),
            ),
            loss_density_entropy(opacity),
        )

    return loss, (
        rng.uniform(-2.0, 0.0, size=64),
        rng.uniform(0.0, 0.3, size=(64, 3)),
    )


SUITES: typ.Final[dict[str, SuiteBuilder]] = {
    "add": _binary("add"),
    "sub": _binary("sub"),
    "mul": _binary("mul"),
    "div": _div,
    "neg": _unary("neg"),
    "power": _power,
    "exp": _unary("exp"),
    "expm1": _unary("expm1"),
    "log": _unary("log", _positive),
    "sqrt": _unary("sqrt", _positive),
    "abs": _unary("abs_", _signed),
    "softplus": _unary("softplus"),
    "sigmoid": _unary("sigmoid"),
    "clip": _clip,
    "sum": _reduction("sum_"),
    "mean": _reduction("mean"),
    "cumsum": _reduction("cumsum"),
    "reshape": _reshape,
    "transpose": _transpose,
    "concat": _concat,
    "getitem": _getitem,
    "where": _where,
    "matmul": _matmul,
    "gather_rows": _gather_rows,
    "segment_mean": _segment_mean,
    "filter2d": _filter2d,
    "conv2d": _conv2d,
    "sparse_conv3d": _sparse_conv3d,
    "occupancy_weights": _occupancy_weights,
    "expected_depth": _expected_depth,
    "ray_to_loss": _ray_to_loss,
}


def suite_names() -> tuple[str, ...]:
    """Return the registered operations followed by the pipeline suites."""
    return (*REGISTERED_OPS, *PIPELINE_SUITES)


def run_suite(
    name: str,
    seed: int,
    *,
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> SuiteResult:
    """Run suite ``name`` on the fixture generated from ``seed``."""
    try:
        builder = SUITES[name]
    except KeyError as exc:
        message = f"unknown gradient suite {name!r}"
        raise ValidationError(message) from exc
    fn, inputs = builder(np.random.default_rng(seed))
    error = fd_check(fn, inputs, h, seed=seed)
    return SuiteResult(suite=name, seed=seed, error=error, tolerance=tolerance)


def run_suites(
    names: cabc.Iterable[str] | None = None,
    *,
    fixtures: int = DEFAULT_FIXTURES,
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[SuiteResult]:
    """Run every named suite on ``fixtures`` seeds, in registry order."""
    selected = suite_names() if names is None else tuple(names)
    results = [
        run_suite(name, seed, h=h, tolerance=tolerance)
        for name in selected
        for seed in range(fixtures)
    ]
    failed = [result for result in results if not result.passed]
    LOGGER.info(
        "ran %d gradient fixture(s); %d failed", len(results), len(failed)
    )
    return results
