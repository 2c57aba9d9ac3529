"""Submanifold ``3x3x3`` convolution over occupied cells."""

from __future__ import annotations

import dataclasses as dc
import itertools
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.optim import Parameter, ParameterRole
from voxfield.autodiff.tape import value_of
from voxfield.errors import ShapeError

from . import morton
from .grid import DualOctree

if typ.TYPE_CHECKING:
    from .grid import SparseGrid

KERNEL_OFFSETS: typ.Final[np.ndarray] = np.array(
    list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64
)
DEFAULT_INIT_NOISE: typ.Final[float] = 1e-2


def neighbour_table(grid: SparseGrid) -> np.ndarray:
    """Return the ``(27, N)`` row of each cell's neighbour, ``-1`` when absent.

    Offset ``k`` follows ``itertools.product((-1, 0, 1), repeat=3)``, which
    is the row-major order of a ``(3, 3, 3)`` kernel.
    """
    cells = grid.cells()
    table = np.full((KERNEL_OFFSETS.shape[0], len(grid)), -1, dtype=np.int64)
    for index, offset in enumerate(KERNEL_OFFSETS):
        shifted = cells + offset
        inside = np.all((shifted >= 0) & (shifted < grid.resolution), axis=-1)
        if not inside.any():
            continue
        rows, found = grid.lookup(morton.encode(shifted[inside]))
        table[index, np.flatnonzero(inside)] = np.where(found, rows, -1)
    return table


def sparse_conv(grid: SparseGrid, kernel: object, bias: object) -> SparseGrid:
    """Convolve grid features with ``kernel[3, 3, 3, C_in, C_out]`` plus ``bias``.

    Output cells equal input cells; absent neighbours contribute zero and
    the density channel passes through unchanged.
    """
    shape = value_of(kernel).shape
    if len(shape) != 5 or shape[:3] != (3, 3, 3):
        raise ShapeError.mismatch("sparse_conv kernel", (3, 3, 3, -1, -1), shape)
    if shape[3] != grid.width:
        raise ShapeError.mismatch(
            "sparse_conv input width", (grid.width,), shape[3:4]
        )
    if value_of(bias).shape != (shape[4],):
        raise ShapeError.mismatch(
            "sparse_conv bias", (shape[4],), value_of(bias).shape
        )
    weight = ops.reshape(kernel, (27, shape[3], shape[4]))
    features = ops.sparse_conv3d(grid.features, weight, bias, neighbour_table(grid))
    return grid.with_payload(features=features)


def identity_kernel(width_in: int, width_out: int) -> np.ndarray:
    """Return a kernel whose centre slice copies the leading channels."""
    kernel = np.zeros((3, 3, 3, width_in, width_out))
    kernel[1, 1, 1] = np.eye(width_in, width_out)
    return kernel


@dc.dataclass(slots=True)
class ConvStack:
    """Consecutive sparse convolutions applied to one grid of the octree."""

    kernels: list[Parameter] = dc.field(default_factory=list)
    biases: list[Parameter] = dc.field(default_factory=list)

    @classmethod
    def near_identity(
        cls,
        name: str,
        width: int,
        layers: int,
        rng: np.random.Generator,
        noise: float = DEFAULT_INIT_NOISE,
    ) -> ConvStack:
        """Create ``layers`` width-preserving convolutions close to identity."""
        stack = cls()
        for layer in range(layers):
            kernel = identity_kernel(width, width)
            kernel += rng.normal(0.0, noise, size=kernel.shape)
            prefix = f"{name}.conv{layer}"
            stack.kernels.append(
                Parameter(
                    kernel, name=f"{prefix}.kernel", role=ParameterRole.CONV_KERNEL
                )
            )
            stack.biases.append(
                Parameter(
                    np.zeros(width), name=f"{prefix}.bias", role=ParameterRole.CONV_BIAS
                )
            )
        return stack

    def __len__(self) -> int:
        """Return the number of layers."""
        return len(self.kernels)

    def parameters(self) -> list[Parameter]:
        """Return kernels and biases interleaved by layer."""
        return [
            param
            for pair in zip(self.kernels, self.biases, strict=True)
            for param in pair
        ]

    def __call__(self, grid: SparseGrid) -> SparseGrid:
        """Apply every layer in order."""
        for kernel, bias in zip(self.kernels, self.biases, strict=True):
            grid = sparse_conv(grid, kernel, bias)
        return grid


def convolve_octree(
    octree: DualOctree, fine_stack: ConvStack, coarse_stack: ConvStack
) -> DualOctree:
    """Apply ``fine_stack`` and ``coarse_stack`` to their grids."""
    return DualOctree(
        fine=fine_stack(octree.fine), coarse=coarse_stack(octree.coarse)
    )
