"""Sparse voxel grids keyed by Morton codes and the fine/coarse pair."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import numpy as np

from voxfield.autodiff import ops
from voxfield.autodiff.tape import value_of
from voxfield.errors import ShapeError, ValidationError
from voxfield.geometry import grid_coords

from . import morton

if typ.TYPE_CHECKING:
    import numpy.typing as npt

    from voxfield.autodiff.ops import Array


@dc.dataclass(frozen=True, slots=True, eq=False)
class SparseGrid:
    """Occupied cells of one subdivision level.

    ``keys`` are sorted unique Morton codes; row ``i`` of ``features``,
    ``density`` and ``count`` is the payload of ``keys[i]``. Payload arrays
    may be tape variables so gradients reach whatever produced them.
    """

    level: int
    keys: np.ndarray
    features: Array
    density: Array
    count: np.ndarray

    def __post_init__(self) -> None:
        """Check that payload rows line up with the keys."""
        rows = self.keys.shape[0]
        if value_of(self.features).shape[0] != rows:
            raise ShapeError.mismatch(
                "grid features", (rows, -1), value_of(self.features).shape
            )
        if value_of(self.density).shape != (rows,):
            raise ShapeError.mismatch(
                "grid density", (rows,), value_of(self.density).shape
            )
        if self.count.shape != (rows,):
            raise ShapeError.mismatch("grid count", (rows,), self.count.shape)

    @classmethod
    def empty(cls, level: int, width: int) -> SparseGrid:
        """Return a grid without cells and ``width`` feature channels."""
        return cls(
            level=level,
            keys=np.zeros(0, dtype=np.uint64),
            features=np.zeros((0, width)),
            density=np.zeros(0),
            count=np.zeros(0, dtype=np.int64),
        )

    def __len__(self) -> int:
        """Return the number of occupied cells."""
        return int(self.keys.shape[0])

    @property
    def width(self) -> int:
        """Return the feature width ``C``."""
        return int(value_of(self.features).shape[1])

    @property
    def resolution(self) -> int:
        """Return the number of cells per axis."""
        return 1 << self.level

    def cells(self) -> np.ndarray:
        """Return the integer coordinates of every occupied cell."""
        return morton.decode(self.keys)

    def keys_at(self, s: npt.ArrayLike) -> np.ndarray:
        """Return the Morton keys of the cells containing contracted ``s``."""
        return morton.encode(grid_coords(s, self.level))

    def lookup(self, keys: npt.ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(rows, found)`` for ``keys``; rows are ``0`` where absent."""
        wanted = np.asarray(keys, dtype=np.uint64)
        if not len(self):
            missing = np.zeros(wanted.shape, dtype=bool)
            return np.zeros(wanted.shape, dtype=np.int64), missing
        rows = np.searchsorted(self.keys, wanted)
        rows = np.minimum(rows, len(self) - 1)
        found = self.keys[rows] == wanted
        return np.where(found, rows, 0).astype(np.int64), found

    def with_payload(
        self,
        *,
        features: object | None = None,
        density: object | None = None,
    ) -> SparseGrid:
        """Return the same cells with ``features`` and/or ``density`` replaced."""
        return dc.replace(
            self,
            features=self.features if features is None else features,
            density=self.density if density is None else density,
        )

    def detached(self) -> SparseGrid:
        """Return a copy whose payload no longer records gradients."""
        return self.with_payload(
            features=ops.detach(self.features), density=ops.detach(self.density)
        )


@dc.dataclass(frozen=True, slots=True, eq=False)
class DualOctree:
    """A fine and a coarse :class:`SparseGrid` over the same contracted space."""

    fine: SparseGrid
    coarse: SparseGrid

    def __post_init__(self) -> None:
        """Require the fine grid to be strictly finer."""
        if self.fine.level <= self.coarse.level:
            message = (
                f"fine level {self.fine.level} must exceed "
                f"coarse level {self.coarse.level}"
            )
            raise ValidationError(message)

    @classmethod
    def empty(
        cls,
        fine_level: int,
        coarse_level: int,
        width: int,
        coarse_width: int | None = None,
    ) -> DualOctree:
        """Return an octree without occupied cells."""
        return cls(
            fine=SparseGrid.empty(fine_level, width),
            coarse=SparseGrid.empty(
                coarse_level, width if coarse_width is None else coarse_width
            ),
        )

    @property
    def feature_width(self) -> int:
        """Return the width of concatenated ``[fine || coarse]`` features."""
        return self.fine.width + self.coarse.width

    def detached(self) -> DualOctree:
        """Return a copy whose payload no longer records gradients."""
        return DualOctree(fine=self.fine.detached(), coarse=self.coarse.detached())
