"""Utility helpers for the :mod:`voxfield` package."""

from __future__ import annotations

from .path import normalise_root, resolve_under

__all__ = ["normalise_root", "resolve_under"]
