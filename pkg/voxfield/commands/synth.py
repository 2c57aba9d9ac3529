"""Synthetic scene generation command."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import msgspec

from voxfield.harness import SynthOptions, desk_scene, load_scene, synth_scene
from voxfield.harness.scene import validate_scene

if typ.TYPE_CHECKING:
    from pathlib import Path


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``synth`` command."""

    scene: Path | None = None
    raw_feature_dim: int = 0
    feature_dim: int | None = None
    virtual: bool = True
    width: int | None = None
    height: int | None = None
    seed: int = 0


def run(output: Path, options: Options | None = None) -> str:
    """Write a synthetic scene into ``output`` and describe it."""
    settings = Options() if options is None else options
    if settings.scene is None:
        scene = desk_scene(settings.raw_feature_dim, settings.seed)
    else:
        scene = load_scene(settings.scene)
    rig = msgspec.structs.replace(
        scene.rig,
        width=scene.rig.width if settings.width is None else settings.width,
        height=scene.rig.height if settings.height is None else settings.height,
    )
    scene = validate_scene(msgspec.structs.replace(scene, rig=rig))
    manifest = synth_scene(
        scene,
        output,
        options=SynthOptions(
            feature_dim=settings.feature_dim, virtual=settings.virtual
        ),
    )
    boxes = len(scene.boxes)
    label = "box" if boxes == 1 else "boxes"
    return f"Wrote {manifest} ({boxes} {label}, {rig.width}x{rig.height} images)"
