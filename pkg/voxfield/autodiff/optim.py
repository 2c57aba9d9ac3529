"""Trainable parameters, gradient clipping and the Adam update."""

from __future__ import annotations

import dataclasses as dc
import enum
import logging
import typing as typ

import numpy as np

from .tape import Variable

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    import numpy.typing as npt

LOGGER = logging.getLogger(__name__)


class ParameterRole(enum.StrEnum):
    """Which part of the pipeline a :class:`Parameter` feeds."""

    VOXEL_FEATURE = "voxel_feature"
    VOXEL_DENSITY_LOGIT = "voxel_density_logit"
    DEPTH_LOGIT_STAGE1 = "depth_logit_stage1"
    DEPTH_LOGIT_STAGE2 = "depth_logit_stage2"
    CONV_KERNEL = "conv_kernel"
    CONV_BIAS = "conv_bias"
    DECODER = "decoder"


class Parameter(Variable):
    """A named leaf :class:`Variable` updated by the optimizer."""

    __slots__ = ("role",)

    def __init__(self, value: npt.ArrayLike, *, name: str, role: ParameterRole) -> None:
        """Create a float64 parameter with a zero gradient."""
        super().__init__(value, name=name, requires_grad=True)
        self.role = role
        self.grad = np.zeros_like(self.value)

    @property
    def label(self) -> str:
        """Return the parameter name (always set)."""
        return typ.cast("str", self.name)


@dc.dataclass(slots=True)
class OptimizerState:
    """Adam hyper-parameters and per-parameter moment buffers."""

    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    clip_norm: float = 35.0
    step: int = 0
    first_moment: dict[str, np.ndarray] = dc.field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = dc.field(default_factory=dict)

    def ensure(self, params: cabc.Iterable[Parameter]) -> None:
        """Allocate zero moments for parameters seen for the first time."""
        for param in params:
            if param.label not in self.first_moment:
                self.first_moment[param.label] = np.zeros_like(param.value)
                self.second_moment[param.label] = np.zeros_like(param.value)

    def resize(self, name: str, keep: np.ndarray, size: int) -> None:
        """Remap the moments of ``name`` after its leading axis is rebuilt.

        ``keep`` maps each new row to an old row, or ``-1`` for new rows
        which start from zero moments.
        """
        for buffers in (self.first_moment, self.second_moment):
            old = buffers.get(name)
            if old is None:
                continue
            fresh = np.zeros((size, *old.shape[1:]), dtype=np.float64)
            present = keep >= 0
            fresh[present] = old[keep[present]]
            buffers[name] = fresh


def global_grad_norm(params: cabc.Iterable[Parameter]) -> float:
    """Return the L2 norm of all gradients taken together."""
    total = 0.0
    for param in params:
        if param.grad is not None:
            total += float(np.sum(param.grad * param.grad))
    return float(np.sqrt(total))


def clip_gradients(params: cabc.Sequence[Parameter], clip_norm: float) -> float:
    """Scale every gradient so the global norm is at most ``clip_norm``.

    Returns the pre-clip norm.
    """
    norm = global_grad_norm(params)
    if norm > clip_norm > 0.0:
        scale = clip_norm / norm
        for param in params:
            if param.grad is not None:
                param.grad = param.grad * scale
        LOGGER.debug("clipped gradient norm %.4g to %.4g", norm, clip_norm)
    return norm


def adam_step(
    state: OptimizerState, params: cabc.Sequence[Parameter]
) -> cabc.Sequence[Parameter]:
    """Apply one clipped, bias-corrected Adam update in place."""
    state.ensure(params)
    clip_gradients(params, state.clip_norm)
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for param in params:
        grad = np.zeros_like(param.value) if param.grad is None else param.grad
        first = state.first_moment[param.label]
        second = state.second_moment[param.label]
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad
        update = (first / correction1) / (np.sqrt(second / correction2) + state.eps)
        param.value = param.value - state.lr * update
    return params


def zero_grads(params: cabc.Iterable[Parameter]) -> None:
    """Reset the gradient of every parameter to zero."""
    for param in params:
        param.zero_grad()
