"""Reverse-mode gradients, finite-difference checks and the Adam optimizer."""

from __future__ import annotations

from . import ops
from .gradcheck import fd_check
from .optim import (
    OptimizerState,
    Parameter,
    ParameterRole,
    adam_step,
    clip_gradients,
    zero_grads,
)
from .tape import Tape, Variable, backward, value_of

__all__ = [
    "OptimizerState",
    "Parameter",
    "ParameterRole",
    "Tape",
    "Variable",
    "adam_step",
    "backward",
    "clip_gradients",
    "fd_check",
    "ops",
    "value_of",
    "zero_grads",
]
