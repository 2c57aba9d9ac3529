"""Binary ``P6`` PPM export and import for human-viewable images."""

from __future__ import annotations

import logging
import typing as typ
from pathlib import Path

import numpy as np

from voxfield.errors import ShapeError, TensorFormatError, TensorIOError

if typ.TYPE_CHECKING:
    import numpy.typing as npt

LOGGER = logging.getLogger(__name__)

MAXVAL: typ.Final[int] = 255
_HEADER_FIELDS: typ.Final[int] = 4


def quantise(image: npt.ArrayLike) -> np.ndarray:
    """Clamp ``image`` to ``[0, 1]`` and round half up to 8-bit levels."""
    values = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    return np.floor(values * MAXVAL + 0.5).astype(np.uint8)


def encode_ppm(image: npt.ArrayLike) -> bytes:
    """Return the ``P6`` encoding of an ``(H, W, 3)`` image in ``[0, 1]``."""
    array = np.asarray(image)
    if array.ndim != 3 or array.shape[2] != 3:
        raise ShapeError.mismatch("export_ppm image", (-1, -1, 3), array.shape)
    height, width = array.shape[:2]
    header = f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii")
    return header + quantise(array).tobytes()


def export_ppm(image: npt.ArrayLike, path: Path | str) -> Path:
    """Write ``image`` to ``path`` as binary PPM and return the path."""
    target = Path(path)
    encoded = encode_ppm(image)
    try:
        target.write_bytes(encoded)
    except OSError as exc:
        raise TensorIOError(target, f"cannot write image: {exc.strerror}") from exc
    LOGGER.debug("exported %s", target)
    return target


def _header_tokens(data: bytes, path: Path) -> tuple[list[bytes], int]:
    """Return the four header tokens and the payload offset.

    ``#`` comments are skipped; exactly one whitespace byte separates the
    header from the payload.
    """
    tokens: list[bytes] = []
    position = 0
    while len(tokens) < _HEADER_FIELDS:
        while position < len(data) and data[position : position + 1].isspace():
            position += 1
        if data[position : position + 1] == b"#":
            position = data.find(b"\n", position)
            if position < 0:
                break
            continue
        start = position
        while position < len(data) and not data[position : position + 1].isspace():
            position += 1
        if start == position:
            break
        tokens.append(data[start:position])
    if len(tokens) < _HEADER_FIELDS:
        raise TensorFormatError(path, "truncated PPM header")
    return tokens, position + 1


def decode_ppm(data: bytes, path: Path) -> np.ndarray:
    """Decode binary PPM ``data`` to a float64 ``(H, W, 3)`` image in ``[0, 1]``."""
    tokens, offset = _header_tokens(data, path)
    if tokens[0] != b"P6":
        raise TensorFormatError(path, f"unsupported PPM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(token) for token in tokens[1:])
    except ValueError as exc:
        raise TensorFormatError(path, "non-numeric PPM header field") from exc
    if maxval != MAXVAL:
        raise TensorFormatError(path, f"only 8-bit PPM is supported, maxval {maxval}")
    expected = width * height * 3
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        detail = f"payload holds {len(payload)} of {expected} bytes"
        raise TensorFormatError(path, detail)
    levels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return levels.astype(np.float64) / MAXVAL


def import_ppm(path: Path | str) -> np.ndarray:
    """Read a binary PPM image written by :func:`export_ppm`."""
    source = Path(path)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise TensorIOError(source, f"cannot read image: {exc.strerror}") from exc
    return decode_ppm(data, source)
