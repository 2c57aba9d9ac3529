"""Sparse voxel neural fields lifted from camera depth distributions.

The package exposes the Cyclopts application and the
:func:`voxfield.cli.main` entry point; the numerical building blocks live
in the subpackages.
"""

from __future__ import annotations

from .cli import app, main

__all__ = ["app", "main"]
