"""Open-vocabulary query command."""

from __future__ import annotations

import dataclasses as dc
import logging
import typing as typ

import numpy as np

from voxfield.autodiff.checkpoint import load_checkpoint
from voxfield.config import RenderConfig
from voxfield.errors import ShapeError
from voxfield.objectives.features import pca_project, text_query
from voxfield.renderer.decoder import RGB_CHANNELS
from voxfield.tensor_io import export_ppm, open_scene, read_tensor, write_tensor

from ._shared import render_full

if typ.TYPE_CHECKING:
    from pathlib import Path

    from voxfield.tensor_io import SceneData

LOGGER = logging.getLogger(__name__)


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``query`` command."""

    configuration: RenderConfig = dc.field(default_factory=RenderConfig)
    camera: str | None = None


def _embedding(scene: SceneData, path: Path, width: int) -> np.ndarray:
    raw = read_tensor(path).astype(np.float64).reshape(-1)
    if raw.shape[0] == width:
        return raw
    block = scene.manifest.pca
    if block is not None:
        basis = scene.read(block.basis)
        if basis.shape == (width, raw.shape[0]):
            LOGGER.debug("projecting a %d-wide embedding", raw.shape[0])
            return pca_project(raw, scene.read(block.mean), basis)
    raise ShapeError.mismatch("query embedding", (width,), raw.shape)


def run(
    checkpoint: Path,
    manifest: Path,
    embedding: Path,
    output: Path,
    options: Options | None = None,
) -> str:
    """Score one camera view against ``embedding`` and write a heatmap.

    Raw embeddings are projected with the scene's PCA basis when their
    width matches its input side.
    """
    settings = Options() if options is None else options
    model = load_checkpoint(checkpoint)
    scene = open_scene(manifest)
    spec = (
        scene.manifest.camera(settings.camera)
        if settings.camera is not None
        else scene.manifest.cameras[0]
    )
    images = render_full(model, spec.to_camera(), settings.configuration)
    features = images["feature"][..., RGB_CHANNELS : model.octree.fine.width]
    if features.shape[-1] == 0:
        message = "the checkpoint carries no semantic feature channels"
        raise ShapeError(message)
    query = _embedding(scene, embedding, features.shape[-1])
    heatmap = text_query(features, query)
    output.mkdir(parents=True, exist_ok=True)
    write_tensor(output / "heatmap.vxt", heatmap.astype("<f4"))
    export_ppm(np.repeat(heatmap[..., None], 3, axis=-1), output / "heatmap.ppm")
    LOGGER.info("queried camera %s", spec.name)
    return f"Wrote heatmap for camera {spec.name} into {output}"
