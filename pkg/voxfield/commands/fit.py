"""Per-scene fitting command."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

from voxfield.autodiff.checkpoint import (
    HISTORY_FILENAME,
    save_checkpoint,
    write_history,
)
from voxfield.autodiff.fit import fit
from voxfield.config import FitConfig
from voxfield.tensor_io import open_scene

from ._shared import with_overrides

if typ.TYPE_CHECKING:
    from pathlib import Path

LOGGER = logging.getLogger(__name__)


@dc.dataclass(frozen=True, slots=True)
class WeightOverrides:
    """Loss weights given on the command line."""

    w_rgb: float | None = None
    w_ssim: float | None = None
    w_depth: float | None = None
    w_density: float | None = None
    w_nerf: float | None = None
    w_found: float | None = None


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``fit`` command; ``None`` keeps the configured value."""

    configuration: FitConfig = dc.field(default_factory=FitConfig)
    steps: int | None = None
    seed: int | None = None
    nerf_distill: bool | None = None
    virtual: bool | None = None
    feature_distill: bool | None = None
    decoder: typ.Literal["identity", "learned"] | None = None
    weights: WeightOverrides = dc.field(default_factory=WeightOverrides)


def resolve_config(options: Options) -> FitConfig:
    """Merge command-line overrides into the configured fit settings."""
    base = options.configuration
    weights = with_overrides(base.weights, **dc.asdict(options.weights))
    return with_overrides(
        base,
        steps=options.steps,
        seed=options.seed,
        enable_nerf_distill=options.nerf_distill,
        enable_virtual=options.virtual,
        enable_feature_distill=options.feature_distill,
        decoder=options.decoder,
        weights=weights,
    )


def run(manifest: Path, output: Path, options: Options | None = None) -> str:
    """Fit the scene at ``manifest`` and write a checkpoint into ``output``."""
    settings = Options() if options is None else options
    config = resolve_config(settings)
    result = fit(open_scene(manifest), config)
    checkpoint = save_checkpoint(result, output)
    history = write_history(result.history, checkpoint / HISTORY_FILENAME)
    final = result.history[-1].report
    LOGGER.debug("history written to %s", history)
    return (
        f"Fitted {len(result.model.heads)} camera(s) for {config.steps} step(s); "
        f"final loss {final.total:.6g}; checkpoint {checkpoint}"
    )
