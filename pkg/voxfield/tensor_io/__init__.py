"""Portable tensor files, scene manifests, archives and PPM export."""

from __future__ import annotations

from .archive import read_archive, write_archive
from .manifest import (
    BinSpec,
    CameraSpec,
    ContractionSpec,
    OccupancySpec,
    OctreeSpec,
    PcaSpec,
    SceneData,
    SceneManifest,
    VirtualTargetSpec,
    dump_manifest,
    load_manifest,
    open_scene,
)
from .ppm import export_ppm, import_ppm
from .vxt import read_tensor, write_tensor

__all__ = [
    "BinSpec",
    "CameraSpec",
    "ContractionSpec",
    "OccupancySpec",
    "OctreeSpec",
    "PcaSpec",
    "SceneData",
    "SceneManifest",
    "VirtualTargetSpec",
    "dump_manifest",
    "export_ppm",
    "import_ppm",
    "load_manifest",
    "open_scene",
    "read_archive",
    "read_tensor",
    "write_archive",
    "write_tensor",
]
