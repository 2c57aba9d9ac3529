"""Directory archives of named ``.vxt`` tensors with a typed JSON index.

An archive is a directory holding ``index.json`` plus one ``.vxt`` file
per tensor. The index records a ``kind`` tag, the tensor file names and a
caller-defined metadata struct.
"""

from __future__ import annotations

import logging
import re
import typing as typ
from pathlib import Path

import msgspec
import msgspec.json as msjson

from voxfield.errors import CheckpointError, TensorIOError

from .vxt import read_tensor, write_tensor

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy as np

LOGGER = logging.getLogger(__name__)

INDEX_FILENAME: typ.Final[str] = "index.json"
ARCHIVE_VERSION: typ.Final[int] = 1
_UNSAFE_NAME = re.compile(r"[^A-Za-z0-9_.-]")

MetadataT = typ.TypeVar("MetadataT")


class ArchiveIndex(msgspec.Struct, typ.Generic[MetadataT], frozen=True, kw_only=True):
    """The ``index.json`` document of an archive."""

    kind: str
    metadata: MetadataT
    tensors: dict[str, str]
    version: int = ARCHIVE_VERSION


def tensor_filename(name: str) -> str:
    """Return the ``.vxt`` file name used for tensor ``name``."""
    return f"{_UNSAFE_NAME.sub('_', name)}.vxt"


def write_archive(
    directory: Path | str,
    *,
    kind: str,
    metadata: object,
    tensors: cabc.Mapping[str, np.ndarray],
) -> Path:
    """Write ``tensors`` and ``metadata`` into ``directory``."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for name, tensor in tensors.items():
        filename = tensor_filename(name)
        if filename in files.values():
            message = f"tensor names collide on file {filename!r}"
            raise CheckpointError(message)
        write_tensor(root / filename, tensor)
        files[name] = filename
    index = ArchiveIndex(kind=kind, metadata=metadata, tensors=files)
    (root / INDEX_FILENAME).write_bytes(msjson.format(msjson.encode(index), indent=2))
    LOGGER.debug("wrote %s archive %s with %d tensor(s)", kind, root, len(files))
    return root


def read_archive(
    directory: Path | str,
    *,
    kind: str,
    metadata_type: type[MetadataT],
) -> tuple[MetadataT, dict[str, np.ndarray]]:
    """Read an archive of ``kind`` and return its metadata and tensors."""
    root = Path(directory)
    index_path = root / INDEX_FILENAME
    try:
        raw = index_path.read_bytes()
    except OSError as exc:
        message = f"{index_path}: cannot read archive index ({exc.strerror})"
        raise CheckpointError(message) from exc
    try:
        index = msjson.decode(raw, type=ArchiveIndex[metadata_type])
    except msgspec.MsgspecError as exc:
        message = f"{index_path}: invalid archive index: {exc}"
        raise CheckpointError(message) from exc
    if index.kind != kind:
        message = f"{root}: expected a {kind!r} archive, found {index.kind!r}"
        raise CheckpointError(message)
    if index.version != ARCHIVE_VERSION:
        message = f"{root}: unsupported archive version {index.version}"
        raise CheckpointError(message)
    tensors: dict[str, np.ndarray] = {}
    for name, filename in index.tensors.items():
        try:
            tensors[name] = read_tensor(root / filename)
        except TensorIOError as exc:
            message = f"{root}: tensor {name!r} unreadable: {exc}"
            raise CheckpointError(message) from exc
    return index.metadata, tensors
