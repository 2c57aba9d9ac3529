"""Exception hierarchy shared across :mod:`voxfield`.

Two families exist so the CLI can map failures onto distinct exit codes:
:class:`ValidationError` for bad inputs (exit ``1``) and
:class:`NumericalError` for non-finite intermediate values (exit ``2``).
"""

from __future__ import annotations

import typing as typ

if typ.TYPE_CHECKING:
    from pathlib import Path


class VoxfieldError(RuntimeError):
    """Root of every error raised by :mod:`voxfield`."""


class ValidationError(VoxfieldError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(VoxfieldError):
    """Raised when a computation produces non-finite values."""

    def __init__(self, message: str, *, op: str | None = None) -> None:
        """Record ``op`` alongside the message when known."""
        self.op = op
        if op is not None:
            message = f"{message} (op: {op})"
        super().__init__(message)

    @classmethod
    def non_finite(cls, op: str, stage: str) -> NumericalError:
        """Return an error for a non-finite ``stage`` value inside ``op``."""
        return cls(f"non-finite {stage} encountered", op=op)


class ShapeError(ValidationError):
    """Raised when array shapes disagree with an operation's contract."""

    @classmethod
    def mismatch(
        cls,
        what: str,
        expected: tuple[int, ...],
        actual: tuple[int, ...],
    ) -> ShapeError:
        """Return an error describing an ``expected``/``actual`` mismatch."""
        return cls(f"{what}: expected shape {expected}, got {actual}")


class DomainError(ValidationError):
    """Raised when a value lies outside the domain of a function."""


class RankError(ValidationError):
    """Raised when a sample matrix has too few rows for the requested rank."""


class EmptyMaskError(ValidationError):
    """Raised when a validity mask selects no pixels."""

    def __init__(self, what: str) -> None:
        """Name the reduction that received an empty mask."""
        super().__init__(f"{what}: validity mask selects no pixels")


class ConfigurationError(ValidationError):
    """Raised when ``voxfield.toml`` is invalid."""


class ConfigError(ValidationError):
    """Raised when a fit configuration requests data the manifest lacks."""


class CheckpointError(ValidationError):
    """Raised when a checkpoint archive is incomplete or inconsistent."""


class TensorIOError(ValidationError):
    """Raised when a tensor file cannot be read or written."""

    def __init__(self, path: Path, detail: str) -> None:
        """Attach ``path`` to the failure ``detail``."""
        self.path = path
        super().__init__(f"{path}: {detail}")


class TensorFormatError(TensorIOError):
    """Raised when a ``.vxt`` header is malformed."""


class TensorTruncationError(TensorIOError):
    """Raised when a ``.vxt`` payload is shorter than its header declares."""


class ManifestValidationError(ValidationError):
    """Raised when a scene manifest violates its schema or invariants."""

    def __init__(self, field: str, detail: str) -> None:
        """Record the offending manifest ``field``."""
        self.field = field
        super().__init__(f"{field}: {detail}")


class SceneDescriptionError(ManifestValidationError):
    """Raised when a synthetic scene description is malformed."""
