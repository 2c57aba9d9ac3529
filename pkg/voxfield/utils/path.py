"""Filesystem helpers used across :mod:`voxfield`."""

from __future__ import annotations

from pathlib import Path

from plumbum import local


def normalise_root(value: Path | str | None) -> Path:
    """Return an absolute project path with ``~`` expanded."""
    if value is None:
        return Path.cwd().resolve()
    candidate = local.path(str(value))
    expanded = Path(str(candidate)).expanduser()
    return expanded.resolve(strict=False)


def resolve_under(root: Path, value: Path | str) -> Path:
    """Return ``value`` as an absolute path, relative ones taken from ``root``."""
    candidate = Path(str(local.path(str(root)) / str(value))).expanduser()
    return candidate.resolve(strict=False)
