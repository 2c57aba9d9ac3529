"""Render checkpoint views for the cameras of a scene."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

from voxfield.autodiff.checkpoint import load_checkpoint
from voxfield.config import RenderConfig
from voxfield.tensor_io import export_ppm, open_scene, write_tensor

from ._shared import render_full

if typ.TYPE_CHECKING:
    from pathlib import Path

    from voxfield.tensor_io.manifest import Split

LOGGER = logging.getLogger(__name__)


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``render`` command."""

    configuration: RenderConfig = dc.field(default_factory=RenderConfig)
    cameras: tuple[str, ...] = ()
    split: Split | None = None


def run(
    checkpoint: Path,
    manifest: Path,
    output: Path,
    options: Options | None = None,
) -> str:
    """Render every selected camera of ``manifest`` into ``output``.

    Each camera produces ``<name>_rgb.vxt``, ``<name>_depth.vxt``,
    ``<name>_opacity.vxt`` and ``<name>_feature.vxt`` at full resolution,
    plus an ``<name>_rgb.ppm`` preview.
    """
    settings = Options() if options is None else options
    model = load_checkpoint(checkpoint)
    scene = open_scene(manifest)
    specs = (
        tuple(scene.manifest.camera(name) for name in settings.cameras)
        if settings.cameras
        else scene.manifest.split(settings.split)
    )
    output.mkdir(parents=True, exist_ok=True)
    for spec in specs:
        images = render_full(model, spec.to_camera(), settings.configuration)
        for kind, image in images.items():
            write_tensor(output / f"{spec.name}_{kind}.vxt", image.astype("<f4"))
        export_ppm(images["rgb"], output / f"{spec.name}_rgb.ppm")
        LOGGER.info("rendered camera %s", spec.name)
    return f"Rendered {len(specs)} camera(s) into {output}"
