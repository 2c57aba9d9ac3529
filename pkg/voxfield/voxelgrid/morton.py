"""Morton (Z-order) keys for integer cell coordinates.

Each axis contributes up to 21 bits, interleaved as ``... z1 y1 x1 z0 y0 x0``
into one unsigned 64-bit key.
"""

from __future__ import annotations

import typing as typ

import numpy as np

from voxfield.errors import DomainError

if typ.TYPE_CHECKING:
    import numpy.typing as npt

MAX_LEVEL: typ.Final[int] = 21

_MASKS: typ.Final[tuple[tuple[int, int], ...]] = (
    (32, 0x1F00000000FFFF),
    (16, 0x1F0000FF0000FF),
    (8, 0x100F00F00F00F00F),
    (4, 0x10C30C30C30C30C3),
    (2, 0x1249249249249249),
)
_COMPACT_MASKS: typ.Final[tuple[tuple[int, int], ...]] = (
    (2, 0x10C30C30C30C30C3),
    (4, 0x100F00F00F00F00F),
    (8, 0x1F0000FF0000FF),
    (16, 0x1F00000000FFFF),
    (32, 0x1FFFFF),
)


def _spread(values: np.ndarray) -> np.ndarray:
    spread = values.astype(np.uint64) & np.uint64(0x1FFFFF)
    for shift, mask in _MASKS:
        spread = (spread | (spread << np.uint64(shift))) & np.uint64(mask)
    return spread


def _compact(values: np.ndarray) -> np.ndarray:
    compact = values & np.uint64(_MASKS[-1][1])
    for shift, mask in _COMPACT_MASKS:
        compact = (compact ^ (compact >> np.uint64(shift))) & np.uint64(mask)
    return compact


def encode(cells: npt.ArrayLike) -> np.ndarray:
    """Return Morton keys for integer ``cells[..., 3]``."""
    coords = np.asarray(cells, dtype=np.int64)
    if np.any(coords < 0) or np.any(coords >= 1 << MAX_LEVEL):
        message = f"cell coordinates must lie in [0, 2**{MAX_LEVEL})"
        raise DomainError(message)
    return (
        _spread(coords[..., 0])
        | (_spread(coords[..., 1]) << np.uint64(1))
        | (_spread(coords[..., 2]) << np.uint64(2))
    )


def decode(keys: npt.ArrayLike) -> np.ndarray:
    """Return the integer cell coordinates ``[..., 3]`` of Morton ``keys``."""
    values = np.asarray(keys, dtype=np.uint64)
    return np.stack(
        [
            _compact(values),
            _compact(values >> np.uint64(1)),
            _compact(values >> np.uint64(2)),
        ],
        axis=-1,
    ).astype(np.int64)
