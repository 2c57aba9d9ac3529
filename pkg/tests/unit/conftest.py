"""Shared scene, configuration and checkpoint fixtures for unit tests."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

import pytest

from tests.helpers.scenes import WALL_FEATURE, wall_scene
from voxfield.autodiff.checkpoint import save_checkpoint
from voxfield.autodiff.fit import FitResult, fit
from voxfield.config import FitConfig
from voxfield.harness import synth_scene
from voxfield.tensor_io import open_scene

if typ.TYPE_CHECKING:
    from pathlib import Path


@pytest.fixture(scope="session")
def wall_manifest(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Synthesise the wall scene once per session and return its manifest."""
    return synth_scene(wall_scene(), tmp_path_factory.mktemp("wall"))


@pytest.fixture(scope="session")
def featured_manifest(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Synthesise the wall scene with four-channel box features."""
    return synth_scene(wall_scene(WALL_FEATURE), tmp_path_factory.mktemp("featured"))


@pytest.fixture
def make_fit_config() -> typ.Callable[..., FitConfig]:
    """Return a factory for cheap fit settings with keyword overrides."""

    def _make(**overrides: object) -> FitConfig:
        base = FitConfig(
            steps=0,
            n_uniform=8,
            n_importance=4,
            virtual_per_step=1,
            log_every=1,
        )
        return dc.replace(base, **overrides)  # pyright: ignore[reportArgumentType]

    return _make


@pytest.fixture(scope="session")
def fitted(wall_manifest: Path) -> FitResult:
    """Run a two-step fit of the wall scene."""
    config = FitConfig(steps=2, n_uniform=8, n_importance=4, log_every=1)
    return fit(open_scene(wall_manifest), config)


@pytest.fixture(scope="session")
def wall_checkpoint(
    fitted: FitResult, tmp_path_factory: pytest.TempPathFactory
) -> Path:
    """Save the two-step fit and return the checkpoint directory."""
    return save_checkpoint(fitted, tmp_path_factory.mktemp("ckpt") / "checkpoint")
