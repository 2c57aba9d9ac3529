"""Configuration loading for the :mod:`voxfield` toolkit."""

from __future__ import annotations

import contextlib
import contextvars
import dataclasses as dc
import math
import typing as typ
from collections import abc as cabc

from cyclopts.config import Toml

from voxfield.errors import ConfigurationError, DomainError
from voxfield.objectives.losses import LossWeights
from voxfield.utils import normalise_root

if typ.TYPE_CHECKING:
    from pathlib import Path

CONFIG_FILENAME = "voxfield.toml"

DecoderSetting = typ.Literal["identity", "learned"]
DepthTruth = typ.Literal["sparse", "dense"]
Converter = cabc.Callable[[object, str], typ.Any]


class ConfigurationNotLoadedError(ConfigurationError):
    """Raised when code accesses the configuration before it is loaded."""


def _validate_mapping_keys(
    mapping: cabc.Mapping[str, typ.Any] | None,
    allowed_keys: cabc.Iterable[str],
    context: str,
) -> None:
    """Raise :class:`ConfigurationError` naming keys outside ``allowed_keys``."""
    if mapping is None:
        return
    unknown = set(mapping) - set(allowed_keys)
    if unknown:
        joined = ", ".join(sorted(unknown))
        if context.endswith(" section"):
            message = f"Unknown {context}(s): {joined}."
        else:
            message = f"Unknown {context} option(s): {joined}."
        raise ConfigurationError(message)


def _optional_mapping(
    value: object, field_name: str
) -> cabc.Mapping[str, typ.Any] | None:
    """Ensure ``value`` is a mapping if provided."""
    if value is None:
        return None
    if isinstance(value, cabc.Mapping):
        return value
    message = f"{field_name} must be a TOML table; received {type(value).__name__}."
    raise ConfigurationError(message)


def _number(value: object, field_name: str, *, minimum: float = 0.0) -> float:
    """Return ``value`` as a finite float no smaller than ``minimum``."""
    if isinstance(value, bool) or not isinstance(value, int | float):
        message = f"{field_name} must be a number; received {type(value).__name__}."
        raise ConfigurationError(message)
    number = float(value)
    if not math.isfinite(number) or number < minimum:
        message = f"{field_name} must be a finite number >= {minimum}; got {value}."
        raise ConfigurationError(message)
    return number


def _integer(value: object, field_name: str, *, minimum: int = 0) -> int:
    """Return ``value`` as an integer no smaller than ``minimum``."""
    if isinstance(value, bool) or not isinstance(value, int):
        message = f"{field_name} must be an integer; received {type(value).__name__}."
        raise ConfigurationError(message)
    if value < minimum:
        message = f"{field_name} must be >= {minimum}; got {value}."
        raise ConfigurationError(message)
    return value


def _boolean(value: object, field_name: str) -> bool:
    if not isinstance(value, bool):
        message = f"{field_name} must be true or false; received {value!r}."
        raise ConfigurationError(message)
    return value


def _choice(value: object, field_name: str, choices: tuple[str, ...]) -> str:
    if value not in choices:
        joined = ", ".join(repr(choice) for choice in choices)
        message = f"{field_name} must be one of {joined}; got {value!r}."
        raise ConfigurationError(message)
    return typ.cast("str", value)


def _converted(
    mapping: cabc.Mapping[str, typ.Any],
    context: str,
    converters: cabc.Mapping[str, Converter],
) -> dict[str, typ.Any]:
    """Convert every present key of ``mapping`` with its converter."""
    _validate_mapping_keys(mapping, converters, context)
    return {
        key: converters[key](value, f"{context}.{key}")
        for key, value in mapping.items()
    }


def loss_weights_from_mapping(
    mapping: cabc.Mapping[str, typ.Any] | None,
) -> LossWeights:
    """Create :class:`LossWeights` from the ``fit.weights`` table."""
    if mapping is None:
        return LossWeights()
    converters = {field.name: _number for field in dc.fields(LossWeights)}
    try:
        return LossWeights(**_converted(mapping, "fit.weights", converters))
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from exc


@dc.dataclass(frozen=True, slots=True)
class FitConfig:
    """Settings for the ``fit`` command."""

    steps: int = 200
    seed: int = 0
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    clip_norm: float = 35.0
    n_uniform: int = 64
    n_importance: int = 32
    density_floor: float = 1e-8
    conv_layers: int = 1
    rebuild_every: int = 0
    jitter: bool = True
    decoder: DecoderSetting = "identity"
    virtual_per_step: int = 1
    fine_beta: float = 1.5
    weights: LossWeights = dc.field(default_factory=LossWeights)
    enable_nerf_distill: bool = True
    enable_virtual: bool = True
    enable_feature_distill: bool = False
    log_every: int = 10

    @classmethod
    def from_mapping(cls, mapping: cabc.Mapping[str, typ.Any] | None) -> FitConfig:
        """Create a :class:`FitConfig` from the ``fit`` table."""
        if mapping is None:
            return cls()

        def integer_from(minimum: int) -> Converter:
            return lambda value, name: _integer(value, name, minimum=minimum)

        converters: dict[str, Converter] = {
            "steps": integer_from(0),
            "seed": integer_from(0),
            "lr": _number,
            "beta1": _number,
            "beta2": _number,
            "eps": _number,
            "clip_norm": _number,
            "n_uniform": integer_from(2),
            "n_importance": integer_from(2),
            "density_floor": _number,
            "conv_layers": integer_from(0),
            "rebuild_every": integer_from(0),
            "jitter": _boolean,
            "decoder": lambda value, name: _choice(
                value, name, ("identity", "learned")
            ),
            "virtual_per_step": integer_from(0),
            "fine_beta": _number,
            "weights": lambda value, name: loss_weights_from_mapping(
                _optional_mapping(value, name)
            ),
            "enable_nerf_distill": _boolean,
            "enable_virtual": _boolean,
            "enable_feature_distill": _boolean,
            "log_every": integer_from(1),
        }
        return cls(**_converted(mapping, "fit", converters))


@dc.dataclass(frozen=True, slots=True)
class RenderConfig:
    """Settings for the ``render`` and ``query`` commands."""

    n_uniform: int = 64
    n_importance: int = 32
    workers: int = 1

    @classmethod
    def from_mapping(
        cls, mapping: cabc.Mapping[str, typ.Any] | None
    ) -> RenderConfig:
        """Create a :class:`RenderConfig` from the ``render`` table."""
        if mapping is None:
            return cls()
        converters: dict[str, Converter] = {
            "n_uniform": lambda value, name: _integer(value, name, minimum=2),
            "n_importance": lambda value, name: _integer(value, name, minimum=2),
            "workers": lambda value, name: _integer(value, name, minimum=1),
        }
        return cls(**_converted(mapping, "render", converters))


@dc.dataclass(frozen=True, slots=True)
class EvalConfig:
    """Settings for the ``eval`` and ``occupancy`` commands."""

    max_depth: float = 80.0
    depth_gt: DepthTruth = "sparse"
    occupancy_threshold: float = 1e-3

    @classmethod
    def from_mapping(cls, mapping: cabc.Mapping[str, typ.Any] | None) -> EvalConfig:
        """Create an :class:`EvalConfig` from the ``eval`` table."""
        if mapping is None:
            return cls()
        converters: dict[str, Converter] = {
            "max_depth": _number,
            "depth_gt": lambda value, name: _choice(value, name, ("sparse", "dense")),
            "occupancy_threshold": _number,
        }
        return cls(**_converted(mapping, "eval", converters))


@dc.dataclass(frozen=True, slots=True)
class VoxfieldConfig:
    """Strongly-typed representation of ``voxfield.toml``."""

    fit: FitConfig = dc.field(default_factory=FitConfig)
    render: RenderConfig = dc.field(default_factory=RenderConfig)
    eval: EvalConfig = dc.field(default_factory=EvalConfig)

    @classmethod
    def from_mapping(cls, mapping: cabc.Mapping[str, typ.Any]) -> VoxfieldConfig:
        """Create a :class:`VoxfieldConfig` from a parsed configuration mapping."""
        _validate_mapping_keys(
            mapping, {"fit", "render", "eval"}, "configuration section"
        )
        return cls(
            fit=FitConfig.from_mapping(_optional_mapping(mapping.get("fit"), "fit")),
            render=RenderConfig.from_mapping(
                _optional_mapping(mapping.get("render"), "render")
            ),
            eval=EvalConfig.from_mapping(
                _optional_mapping(mapping.get("eval"), "eval")
            ),
        )


_active_config: contextvars.ContextVar[VoxfieldConfig] = contextvars.ContextVar(
    "voxfield_active_config"
)


def build_loader(root: Path | str | None) -> Toml:
    """Return a Cyclopts loader for ``voxfield.toml`` in ``root``."""
    resolved = normalise_root(root)
    return Toml(
        path=resolved / CONFIG_FILENAME,
        must_exist=False,
        search_parents=False,
        allow_unknown=True,
        use_commands_as_keys=True,
    )


def load_from_loader(loader: Toml) -> VoxfieldConfig:
    """Load and validate configuration using ``loader``.

    A missing file yields the defaults.
    """
    try:
        raw = loader.config
    except FileNotFoundError:
        return VoxfieldConfig()
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    if not raw:
        return VoxfieldConfig()
    if not isinstance(raw, cabc.Mapping):
        message = "Configuration root must be a TOML table."
        raise ConfigurationError(message)
    return VoxfieldConfig.from_mapping(raw)


def load_configuration(root: Path | str | None) -> VoxfieldConfig:
    """Load configuration for ``root`` using Cyclopts."""
    return load_from_loader(build_loader(root))


@contextlib.contextmanager
def use_configuration(configuration: VoxfieldConfig) -> typ.Iterator[None]:
    """Set ``configuration`` as the active configuration for the current context."""
    token = _active_config.set(configuration)
    try:
        yield
    finally:
        _active_config.reset(token)


def current_configuration() -> VoxfieldConfig:
    """Return the active configuration or raise if none has been set."""
    try:
        return _active_config.get()
    except LookupError as exc:
        message = "Configuration has not been loaded yet."
        raise ConfigurationNotLoadedError(message) from exc
