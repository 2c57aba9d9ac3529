"""Command implementations for the :mod:`voxfield` CLI."""

from __future__ import annotations

from . import evaluate, fit, gradcheck, occupancy, query, render, synth

__all__ = ["evaluate", "fit", "gradcheck", "occupancy", "query", "render", "synth"]
