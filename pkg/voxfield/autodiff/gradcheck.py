"""Central finite-difference verification of recorded gradients."""

from __future__ import annotations

import logging
import typing as typ

import numpy as np
import numpy.typing as npt

from .ops import sum_
from .tape import Tape, Variable, value_of

if typ.TYPE_CHECKING:
    from collections import abc as cabc

LOGGER = logging.getLogger(__name__)

DEFAULT_STEP: typ.Final[float] = 1e-4
RELATIVE_FLOOR: typ.Final[float] = 1e-8

Differentiable = typ.Callable[..., object]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Return ``|a - n| / (|a| + |n| + 1e-8)`` elementwise."""
    return np.abs(analytic - numeric) / (
        np.abs(analytic) + np.abs(numeric) + RELATIVE_FLOOR
    )


def _cotangent(
    fn: Differentiable, inputs: cabc.Sequence[np.ndarray], seed: int
) -> np.ndarray:
    """Return a fixed random weighting that reduces ``fn``'s output to a scalar."""
    shape = value_of(fn(*inputs)).shape
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 1.5, size=shape)


def analytic_gradients(
    fn: Differentiable,
    inputs: cabc.Sequence[np.ndarray],
    cotangent: np.ndarray,
) -> list[np.ndarray]:
    """Return tape gradients of ``sum(fn(*inputs) * cotangent)``."""
    variables = [
        Variable(entry, name=f"input{index}", requires_grad=True)
        for index, entry in enumerate(inputs)
    ]
    with Tape() as tape:
        output = fn(*variables)
        loss = sum_(output * cotangent) if isinstance(output, Variable) else None
        if loss is None:
            message = "function under test ignored every differentiable input"
            raise TypeError(message)
        tape.backward(typ.cast("Variable", loss))
    return [
        np.zeros_like(variable.value) if variable.grad is None else variable.grad
        for variable in variables
    ]


def numeric_gradients(
    fn: Differentiable,
    inputs: cabc.Sequence[np.ndarray],
    cotangent: np.ndarray,
    h: float = DEFAULT_STEP,
) -> list[np.ndarray]:
    """Return central differences ``(f(x+h) - f(x-h)) / 2h`` per coordinate."""
    base = [np.array(entry, dtype=np.float64) for entry in inputs]
    gradients: list[np.ndarray] = []
    for position, array in enumerate(base):
        gradient = np.zeros_like(array)
        flat = array.reshape(-1)
        for coordinate in range(flat.size):
            original = flat[coordinate]
            flat[coordinate] = original + h
            upper = float(np.sum(value_of(fn(*base)) * cotangent))
            flat[coordinate] = original - h
            lower = float(np.sum(value_of(fn(*base)) * cotangent))
            flat[coordinate] = original
            gradient.reshape(-1)[coordinate] = (upper - lower) / (2.0 * h)
        gradients.append(gradient)
    return gradients


def fd_check(
    fn: Differentiable,
    inputs: cabc.Sequence[npt.ArrayLike],
    h: float = DEFAULT_STEP,
    *,
    seed: int = 0,
) -> float:
    """Return the maximum relative error between tape and FD gradients.

    ``fn`` receives one argument per entry of ``inputs`` and may return an
    array of any shape; the output is reduced with a fixed positive random
    cotangent so every output element contributes.
    """
    arrays = [np.array(entry, dtype=np.float64) for entry in inputs]
    cotangent = _cotangent(fn, arrays, seed)
    analytic = analytic_gradients(fn, arrays, cotangent)
    numeric = numeric_gradients(fn, arrays, cotangent, h)
    worst = 0.0
    for tape_grad, fd_grad in zip(analytic, numeric, strict=True):
        if tape_grad.size:
            worst = max(worst, float(np.max(relative_error(tape_grad, fd_grad))))
    LOGGER.debug("fd_check max relative error %.3e", worst)
    return worst
