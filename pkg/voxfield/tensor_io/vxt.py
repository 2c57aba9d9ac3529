"""The ``.vxt`` portable tensor format.

Layout: magic ``VXT1``; one byte dtype code (1=f32, 2=f64, 3=u8); one byte
rank; ``rank`` little-endian unsigned 64-bit dimensions; row-major
little-endian payload.
"""

from __future__ import annotations

import logging
import typing as typ
from pathlib import Path

import numpy as np

from voxfield.errors import (
    ShapeError,
    TensorFormatError,
    TensorIOError,
    TensorTruncationError,
)

if typ.TYPE_CHECKING:
    import numpy.typing as npt

LOGGER = logging.getLogger(__name__)

MAGIC: typ.Final[bytes] = b"VXT1"
MAX_RANK: typ.Final[int] = 5

_CODE_BY_DTYPE: typ.Final[dict[np.dtype[typ.Any], int]] = {
    np.dtype("<f4"): 1,
    np.dtype("<f8"): 2,
    np.dtype("u1"): 3,
}
_DTYPE_BY_CODE: typ.Final[dict[int, np.dtype[typ.Any]]] = {
    code: dtype for dtype, code in _CODE_BY_DTYPE.items()
}


def _dtype_code(array: np.ndarray) -> int:
    dtype = array.dtype.newbyteorder("<") if array.dtype.itemsize > 1 else array.dtype
    code = _CODE_BY_DTYPE.get(dtype)
    if code is None:
        message = f"unsupported tensor dtype {array.dtype}; expected f32, f64 or u8"
        raise ShapeError(message)
    return code


def encode_tensor(tensor: npt.ArrayLike) -> bytes:
    """Return the ``.vxt`` byte encoding of ``tensor``."""
    array = np.asarray(tensor)
    if array.ndim == 0:
        array = array.reshape(1)
    if not 1 <= array.ndim <= MAX_RANK:
        message = f"tensor rank must be in [1, {MAX_RANK}], got {array.ndim}"
        raise ShapeError(message)
    code = _dtype_code(array)
    dims = np.asarray(array.shape, dtype="<u8").tobytes()
    payload = np.ascontiguousarray(array, dtype=_DTYPE_BY_CODE[code]).tobytes()
    return MAGIC + bytes((code, array.ndim)) + dims + payload


def decode_tensor(data: bytes, path: Path) -> np.ndarray:
    """Decode ``.vxt`` ``data`` read from ``path``."""
    header = len(MAGIC) + 2
    if len(data) < header or data[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(path, "bad magic; expected 'VXT1'")
    code, rank = data[len(MAGIC)], data[len(MAGIC) + 1]
    dtype = _DTYPE_BY_CODE.get(code)
    if dtype is None:
        raise TensorFormatError(path, f"unknown dtype code {code}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(path, f"rank {rank} outside [1, {MAX_RANK}]")
    dims_end = header + 8 * rank
    if len(data) < dims_end:
        raise TensorTruncationError(path, "header truncated before dimensions")
    shape = tuple(int(dim) for dim in np.frombuffer(data[header:dims_end], dtype="<u8"))
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    available = len(data) - dims_end
    if available < expected:
        raise TensorTruncationError(
            path, f"payload holds {available} bytes, header declares {expected}"
        )
    if available > expected:
        raise TensorFormatError(path, f"{available - expected} trailing bytes")
    values = np.frombuffer(data[dims_end:], dtype=dtype).reshape(shape)
    return values.astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path: Path | str, tensor: npt.ArrayLike) -> None:
    """Write ``tensor`` to ``path`` in ``.vxt`` format."""
    target = Path(path)
    encoded = encode_tensor(tensor)
    try:
        target.write_bytes(encoded)
    except OSError as exc:
        raise TensorIOError(target, f"cannot write tensor: {exc.strerror}") from exc
    LOGGER.debug("wrote %s (%d bytes)", target, len(encoded))


def read_tensor(path: Path | str) -> np.ndarray:
    """Read a ``.vxt`` tensor from ``path``."""
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise TensorIOError(source, f"cannot read tensor: {exc.strerror}") from exc
    return decode_tensor(data, source)
