"""Pytest configuration for the voxfield test-suite."""

from __future__ import annotations

import os
import textwrap
import typing as typ
from pathlib import Path

import pytest

pytest_plugins = ("tests.bdd.steps.config_fixtures",)


@pytest.fixture
def repo_root() -> Path:
    """Return the repository root directory."""
    return Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def _restore_root_env() -> typ.Iterator[None]:
    """Ensure tests do not leak ``VOXFIELD_ROOT`` between runs."""
    from voxfield.cli import ROOT_ENV_VAR

    original = os.environ.get(ROOT_ENV_VAR)
    try:
        yield
    finally:
        if original is None:
            os.environ.pop(ROOT_ENV_VAR, None)
        else:
            os.environ[ROOT_ENV_VAR] = original


@pytest.fixture
def write_config(tmp_path: Path) -> typ.Callable[[str], Path]:
    """Return a helper that writes ``voxfield.toml`` into ``tmp_path``."""
    from voxfield import config as config_module

    def _write(body: str) -> Path:
        config_path = tmp_path / config_module.CONFIG_FILENAME
        config_path.write_text(textwrap.dedent(body).lstrip())
        return config_path

    return _write
