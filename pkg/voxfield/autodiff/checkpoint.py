"""Checkpoint archives and loss-history files produced by ``fit``."""

from __future__ import annotations

import csv
import dataclasses as dc
import logging
import typing as typ
from pathlib import Path

import msgspec
import numpy as np

from voxfield.config import FitConfig
from voxfield.errors import CheckpointError
from voxfield.geometry import Contraction
from voxfield.renderer import Decoder, DecoderMode, SamplingPlan
from voxfield.tensor_io.archive import read_archive, write_archive
from voxfield.voxelgrid.storage import (
    OctreeLevels,
    octree_from_tensors,
    octree_tensors,
)

from .optim import OptimizerState, Parameter, ParameterRole

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    from voxfield.voxelgrid.grid import DualOctree

    from .fit import FitResult, HistoryEntry

LOGGER = logging.getLogger(__name__)

CHECKPOINT_KIND: typ.Final[str] = "checkpoint"
HISTORY_FILENAME: typ.Final[str] = "history.csv"
HISTORY_HEADER: typ.Final[tuple[str, ...]] = (
    "step",
    "l_rgb",
    "l_depth",
    "l_density",
    "l_nerf",
    "l_found",
    "total",
)
_PARAM_PREFIX: typ.Final[str] = "param."
_FIRST_MOMENT_PREFIX: typ.Final[str] = "adam.m."
_SECOND_MOMENT_PREFIX: typ.Final[str] = "adam.v."
_OCTREE_PREFIX: typ.Final[str] = "octree"


class ParameterEntry(msgspec.Struct, frozen=True, kw_only=True):
    """Name and role of one stored parameter."""

    name: str
    role: ParameterRole


class CheckpointMeta(msgspec.Struct, frozen=True, kw_only=True):
    """The ``index.json`` metadata of a checkpoint archive."""

    step: int
    fit: FitConfig
    levels: OctreeLevels
    feature_width: int
    p_inner: tuple[float, float, float]
    alpha: float
    t_near: float
    t_far: float
    cameras: tuple[str, ...]
    parameters: tuple[ParameterEntry, ...]


@dc.dataclass(frozen=True, slots=True, eq=False)
class Checkpoint:
    """A loaded checkpoint: rendering field, decoder and optimizer state."""

    meta: CheckpointMeta
    octree: DualOctree
    decoder: Decoder
    parameters: dict[str, Parameter]
    optimizer: OptimizerState

    @property
    def contraction(self) -> Contraction:
        """Return the contraction the field was fitted in."""
        return Contraction(p_inner=np.asarray(self.meta.p_inner), alpha=self.meta.alpha)

    def sampling_plan(self, uniform: int, importance: int) -> SamplingPlan:
        """Return a deterministic plan over the fitted depth range."""
        return SamplingPlan(
            t_near=self.meta.t_near,
            t_far=self.meta.t_far,
            uniform_samples=uniform,
            importance_samples=importance,
        )


def checkpoint_tensors(result: FitResult) -> dict[str, np.ndarray]:
    """Return every tensor stored in the checkpoint of ``result``."""
    tensors = octree_tensors(result.octree, _OCTREE_PREFIX)
    for param in result.model.parameters():
        tensors[f"{_PARAM_PREFIX}{param.label}"] = param.value.astype(np.float32)
        first = result.optimizer.first_moment.get(param.label)
        second = result.optimizer.second_moment.get(param.label)
        if first is not None and second is not None:
            tensors[f"{_FIRST_MOMENT_PREFIX}{param.label}"] = first.astype(np.float32)
            tensors[f"{_SECOND_MOMENT_PREFIX}{param.label}"] = second.astype(
                np.float32
            )
    return tensors


def save_checkpoint(result: FitResult, directory: Path | str) -> Path:
    """Write the archive for ``result`` into ``directory``."""
    model = result.model
    meta = CheckpointMeta(
        step=result.optimizer.step,
        fit=result.config,
        levels=OctreeLevels(
            fine_level=result.octree.fine.level,
            coarse_level=result.octree.coarse.level,
        ),
        feature_width=result.octree.feature_width,
        p_inner=typ.cast(
            "tuple[float, float, float]",
            tuple(float(value) for value in model.contraction.p_inner),
        ),
        alpha=model.contraction.alpha,
        t_near=model.bins.near,
        t_far=model.bins.far,
        cameras=tuple(head.name for head in model.heads),
        parameters=tuple(
            ParameterEntry(name=param.label, role=param.role)
            for param in model.parameters()
        ),
    )
    root = write_archive(
        directory,
        kind=CHECKPOINT_KIND,
        metadata=meta,
        tensors=checkpoint_tensors(result),
    )
    LOGGER.info("wrote checkpoint %s at step %d", root, meta.step)
    return root


def _decoder_from(
    meta: CheckpointMeta, parameters: cabc.Mapping[str, Parameter]
) -> Decoder:
    if meta.fit.decoder != DecoderMode.LEARNED:
        return Decoder.identity()
    try:
        weight = parameters["decoder.weight"]
        bias = parameters["decoder.bias"]
    except KeyError as exc:
        message = f"learned decoder parameter {exc.args[0]!r} is missing"
        raise CheckpointError(message) from exc
    return Decoder(mode=DecoderMode.LEARNED, weight=weight, bias=bias)


def load_checkpoint(directory: Path | str) -> Checkpoint:
    """Read a checkpoint archive written by :func:`save_checkpoint`."""
    meta, tensors = read_archive(
        directory, kind=CHECKPOINT_KIND, metadata_type=CheckpointMeta
    )
    parameters: dict[str, Parameter] = {}
    optimizer = OptimizerState(
        lr=meta.fit.lr,
        beta1=meta.fit.beta1,
        beta2=meta.fit.beta2,
        eps=meta.fit.eps,
        clip_norm=meta.fit.clip_norm,
        step=meta.step,
    )
    for entry in meta.parameters:
        stored = tensors.get(f"{_PARAM_PREFIX}{entry.name}")
        if stored is None:
            message = f"{directory}: parameter {entry.name!r} is missing"
            raise CheckpointError(message)
        parameters[entry.name] = Parameter(stored, name=entry.name, role=entry.role)
        first = tensors.get(f"{_FIRST_MOMENT_PREFIX}{entry.name}")
        second = tensors.get(f"{_SECOND_MOMENT_PREFIX}{entry.name}")
        if first is not None and second is not None:
            optimizer.first_moment[entry.name] = first.astype(np.float64)
            optimizer.second_moment[entry.name] = second.astype(np.float64)
    octree = octree_from_tensors(tensors, meta.levels, _OCTREE_PREFIX)
    if octree.feature_width != meta.feature_width:
        message = (
            f"{directory}: stored feature width {octree.feature_width} "
            f"disagrees with the index ({meta.feature_width})"
        )
        raise CheckpointError(message)
    return Checkpoint(
        meta=meta,
        octree=octree,
        decoder=_decoder_from(meta, parameters),
        parameters=parameters,
        optimizer=optimizer,
    )


def write_history(history: cabc.Sequence[HistoryEntry], path: Path | str) -> Path:
    """Write the loss history as CSV with round-trip exact floats."""
    target = Path(path)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for entry in history:
            writer.writerow(
                [str(entry.step), *(repr(value) for value in entry.report.as_row())]
            )
    return target


def read_history(path: Path | str) -> list[dict[str, float]]:
    """Read a history file back into one mapping per row."""
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != HISTORY_HEADER:
            message = f"{path}: unexpected history header {reader.fieldnames}"
            raise CheckpointError(message)
        return [{key: float(value) for key, value in row.items()} for row in reader]
