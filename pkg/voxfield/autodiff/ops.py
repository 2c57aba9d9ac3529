"""Differentiable array operations with registered vector-Jacobian rules.

Each op accepts :class:`~voxfield.autodiff.tape.Variable` instances or plain
arrays. When no input is a :class:`Variable` the op is a thin numpy call and
returns an :class:`numpy.ndarray`; otherwise it returns a :class:`Variable`
and, if a tape is active and an input is tracked, records its backward rule.
"""

from __future__ import annotations

import typing as typ

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

from voxfield.errors import NumericalError, ShapeError

from .tape import Variable, active_tape, value_of

if typ.TYPE_CHECKING:
    from collections import abc as cabc

    from .tape import Backward

Array = Variable | np.ndarray

REGISTERED_OPS: typ.Final[tuple[str, ...]] = (
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "exp",
    "expm1",
    "log",
    "sqrt",
    "abs",
    "softplus",
    "sigmoid",
    "clip",
    "sum",
    "mean",
    "cumsum",
    "reshape",
    "transpose",
    "concat",
    "getitem",
    "where",
    "matmul",
    "gather_rows",
    "segment_mean",
    "filter2d",
    "conv2d",
    "sparse_conv3d",
)


def _emit(
    op: str,
    value: np.ndarray,
    inputs: tuple[object, ...],
    backward: Backward,
) -> Array:
    """Wrap ``value`` and record ``backward`` when gradients are needed."""
    if not any(isinstance(entry, Variable) for entry in inputs):
        return value
    output = Variable(value)
    tape = active_tape()
    if tape is None:
        return output
    if not any(isinstance(entry, Variable) and entry.tracked for entry in inputs):
        return output
    if not np.all(np.isfinite(value)):
        raise NumericalError.non_finite(op, "forward value")
    output.tracked = True
    tape.record(op, output, inputs, backward)
    return output


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(
        index
        for index, (size, target) in enumerate(zip(grad.shape, shape, strict=True))
        if target == 1 and size != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def detach(x: object) -> np.ndarray:
    """Return the value of ``x`` as a constant (stop-gradient)."""
    return value_of(x).copy() if isinstance(x, Variable) else value_of(x)


def constant(x: npt.ArrayLike) -> np.ndarray:
    """Return ``x`` as a float64 constant array."""
    return np.asarray(x, dtype=np.float64)


# -- elementwise binary -----------------------------------------------------


def add(a: object, b: object) -> Array:
    """Return ``a + b`` with broadcasting."""
    av, bv = value_of(a), value_of(b)
    return _emit(
        "add",
        av + bv,
        (a, b),
        lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)),
    )


def sub(a: object, b: object) -> Array:
    """Return ``a - b`` with broadcasting."""
    av, bv = value_of(a), value_of(b)
    return _emit(
        "sub",
        av - bv,
        (a, b),
        lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)),
    )


def mul(a: object, b: object) -> Array:
    """Return ``a * b`` with broadcasting."""
    av, bv = value_of(a), value_of(b)
    return _emit(
        "mul",
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a: object, b: object) -> Array:
    """Return ``a / b`` with broadcasting."""
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _emit(
        "div",
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / bv, av.shape),
            _unbroadcast(-g * out / bv, bv.shape),
        ),
    )


# -- elementwise unary ------------------------------------------------------


def neg(x: object) -> Array:
    """Return ``-x``."""
    return _emit("neg", -value_of(x), (x,), lambda g: (-g,))


def power(x: object, exponent: float) -> Array:
    """Return ``x ** exponent`` for a constant ``exponent``."""
    xv = value_of(x)
    return _emit(
        "power",
        xv**exponent,
        (x,),
        lambda g: (g * exponent * xv ** (exponent - 1.0),),
    )


def exp(x: object) -> Array:
    """Return ``exp(x)``."""
    out = np.exp(value_of(x))
    return _emit("exp", out, (x,), lambda g: (g * out,))


def expm1(x: object) -> Array:
    """Return ``exp(x) - 1`` computed without cancellation."""
    xv = value_of(x)
    return _emit("expm1", np.expm1(xv), (x,), lambda g: (g * np.exp(xv),))


def log(x: object) -> Array:
    """Return the natural logarithm of ``x``."""
    xv = value_of(x)
    return _emit("log", np.log(xv), (x,), lambda g: (g / xv,))


def sqrt(x: object) -> Array:
    """Return the square root of ``x``."""
    out = np.sqrt(value_of(x))
    return _emit("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


def abs_(x: object) -> Array:
    """Return ``|x|``; the subgradient at zero is zero."""
    xv = value_of(x)
    return _emit("abs", np.abs(xv), (x,), lambda g: (g * np.sign(xv),))


def softplus(x: object) -> Array:
    """Return ``log(1 + exp(x))`` evaluated stably."""
    xv = value_of(x)
    out = np.logaddexp(0.0, xv)
    return _emit(
        "softplus", out, (x,), lambda g: (g * _sigmoid_value(xv),)
    )


def inverse_softplus(y: npt.ArrayLike) -> np.ndarray:
    """Return ``x`` such that ``softplus(x) == y`` for positive ``y``."""
    yv = np.asarray(y, dtype=np.float64)
    return yv + np.log(-np.expm1(-yv))


def _sigmoid_value(xv: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -xv))


def sigmoid(x: object) -> Array:
    """Return the logistic function of ``x``."""
    out = _sigmoid_value(value_of(x))
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def clip(x: object, lower: float, upper: float) -> Array:
    """Clamp ``x`` to ``[lower, upper]``; gradients pass only inside."""
    xv = value_of(x)
    inside = (xv >= lower) & (xv <= upper)
    return _emit(
        "clip", np.clip(xv, lower, upper), (x,), lambda g: (g * inside,)
    )


# -- reductions -------------------------------------------------------------


def _axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(entry % ndim for entry in axis)


def sum_(
    x: object,
    axis: int | tuple[int, ...] | None = None,
    *,
    keepdims: bool = False,
) -> Array:
    """Return the sum of ``x`` over ``axis``."""
    xv = value_of(x)
    axes = _axes(axis, xv.ndim)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        expanded = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(expanded, xv.shape).copy(),)

    return _emit("sum", xv.sum(axis=axes, keepdims=keepdims), (x,), _backward)


def mean(
    x: object,
    axis: int | tuple[int, ...] | None = None,
    *,
    keepdims: bool = False,
) -> Array:
    """Return the arithmetic mean of ``x`` over ``axis``."""
    xv = value_of(x)
    axes = _axes(axis, xv.ndim)
    count = float(np.prod([xv.shape[entry] for entry in axes])) if axes else 1.0

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        expanded = g if keepdims else np.expand_dims(g, axes)
        return (np.broadcast_to(expanded / count, xv.shape).copy(),)

    return _emit("mean", xv.mean(axis=axes, keepdims=keepdims), (x,), _backward)


def cumsum(x: object, axis: int = -1) -> Array:
    """Return the inclusive cumulative sum of ``x`` along ``axis``."""
    xv = value_of(x)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        flipped = np.flip(g, axis=axis)
        return (np.flip(np.cumsum(flipped, axis=axis), axis=axis),)

    return _emit("cumsum", np.cumsum(xv, axis=axis), (x,), _backward)


# -- shape manipulation -----------------------------------------------------


def reshape(x: object, shape: tuple[int, ...]) -> Array:
    """Return ``x`` reshaped to ``shape``."""
    xv = value_of(x)
    return _emit(
        "reshape", xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),)
    )


def transpose(x: object, axes: tuple[int, ...]) -> Array:
    """Return ``x`` with its axes permuted by ``axes``."""
    inverse = tuple(int(entry) for entry in np.argsort(axes))
    return _emit(
        "transpose",
        np.transpose(value_of(x), axes),
        (x,),
        lambda g: (np.transpose(g, inverse),),
    )


def concat(xs: cabc.Sequence[object], axis: int = -1) -> Array:
    """Concatenate ``xs`` along ``axis``."""
    values = [value_of(entry) for entry in xs]
    out = np.concatenate(values, axis=axis)
    bounds = np.cumsum([entry.shape[axis] for entry in values])[:-1]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", out, tuple(xs), _backward)


def getitem(x: object, index: object) -> Array:
    """Return ``x[index]`` for basic or advanced ``index``."""
    xv = value_of(x)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(xv)
        np.add.at(grad, index, g)
        return (grad,)

    return _emit("getitem", xv[index], (x,), _backward)


def where(condition: np.ndarray, a: object, b: object) -> Array:
    """Select from ``a`` where ``condition`` holds, else from ``b``."""
    av, bv = value_of(a), value_of(b)
    cond = np.asarray(condition, dtype=bool)
    return _emit(
        "where",
        np.where(cond, av, bv),
        (a, b),
        lambda g: (
            _unbroadcast(np.where(cond, g, 0.0), av.shape),
            _unbroadcast(np.where(cond, 0.0, g), bv.shape),
        ),
    )


# -- linear algebra and gathers ---------------------------------------------


def matmul(a: object, b: object) -> Array:
    """Return the matrix product ``a @ b`` for operands of rank two or more."""
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2:
        message = "matmul operands must have rank >= 2"
        raise ShapeError(message)
    return _emit(
        "matmul",
        av @ bv,
        (a, b),
        lambda g: (
            _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape),
            _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape),
        ),
    )


def gather_rows(x: object, index: np.ndarray, valid: np.ndarray) -> Array:
    """Return ``x[index]`` row-wise with zero rows where ``valid`` is false."""
    xv = value_of(x)
    valid = valid & (xv.shape[0] > 0)
    safe = np.where(valid, index, 0)
    mask = valid.reshape(valid.shape + (1,) * (xv.ndim - 1))
    rows = xv[safe] if xv.shape[0] else np.zeros(safe.shape + xv.shape[1:])
    out = np.where(mask, rows, 0.0)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(xv)
        np.add.at(grad, safe[valid], g[valid])
        return (grad,)

    return _emit("gather_rows", out, (x,), _backward)


def segment_mean(x: object, segments: np.ndarray, count: int) -> Array:
    """Average the rows of ``x`` grouped by ``segments`` into ``count`` rows.

    Segments without members produce zero rows.
    """
    xv = value_of(x)
    members = np.bincount(segments, minlength=count).astype(np.float64)
    scale = np.where(members > 0, 1.0 / np.maximum(members, 1.0), 0.0)
    shape = (count, *xv.shape[1:])
    totals = np.zeros(shape, dtype=np.float64)
    np.add.at(totals, segments, xv)
    broadcast = scale.reshape((count,) + (1,) * (xv.ndim - 1))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return ((g * broadcast)[segments],)

    return _emit("segment_mean", totals * broadcast, (x,), _backward)


# -- image filters ----------------------------------------------------------


def filter2d(x: object, kernel: np.ndarray) -> Array:
    """Correlate each channel of ``x[H, W, C]`` with a fixed 2-D ``kernel``.

    Uses ``valid`` borders: the output has shape ``(H-kh+1, W-kw+1, C)``.
    """
    xv = value_of(x)
    kh, kw = kernel.shape
    windows = sliding_window_view(xv, (kh, kw), axis=(0, 1))
    out = np.einsum("hwcij,ij->hwc", windows, kernel)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(xv)
        height, width = g.shape[:2]
        for i in range(kh):
            for j in range(kw):
                grad[i : i + height, j : j + width] += g * kernel[i, j]
        return (grad,)

    return _emit("filter2d", out, (x,), _backward)


def conv2d(x: object, weight: object, bias: object, padding: int) -> Array:
    """Convolve ``x[H, W, Cin]`` with ``weight[kh, kw, Cin, Cout]`` plus bias.

    ``padding`` zeros are added on every border before a ``valid``
    correlation, so ``padding = k // 2`` keeps the spatial size.
    """
    xv, wv, bv = value_of(x), value_of(weight), value_of(bias)
    if xv.shape[-1] != wv.shape[2]:
        raise ShapeError.mismatch("conv2d input channels", (wv.shape[2],), xv.shape)
    kh, kw = wv.shape[:2]
    padded = np.pad(xv, ((padding, padding), (padding, padding), (0, 0)))
    windows = sliding_window_view(padded, (kh, kw), axis=(0, 1))
    out = np.einsum("hwcij,ijco->hwo", windows, wv) + bv

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_weight = np.einsum("hwcij,hwo->ijco", windows, g)
        grad_padded = np.zeros_like(padded)
        height, width = g.shape[:2]
        for i in range(kh):
            for j in range(kw):
                grad_padded[i : i + height, j : j + width] += g @ wv[i, j].T
        rows = slice(padding, padded.shape[0] - padding)
        cols = slice(padding, padded.shape[1] - padding)
        return grad_padded[rows, cols], grad_weight, g.sum(axis=(0, 1))

    return _emit("conv2d", out, (x, weight, bias), _backward)


def sparse_conv3d(
    features: object,
    weight: object,
    bias: object,
    neighbours: np.ndarray,
) -> Array:
    """Submanifold convolution over a precomputed neighbour table.

    ``features`` is ``(N, Cin)``; ``weight`` is ``(K, Cin, Cout)``;
    ``neighbours`` is ``(K, N)`` holding the row of the neighbour at kernel
    offset ``k`` of each cell, or ``-1`` when that neighbour is absent.
    """
    fv, wv, bv = value_of(features), value_of(weight), value_of(bias)
    if fv.shape[1] != wv.shape[1]:
        raise ShapeError.mismatch("sparse_conv3d input width", (wv.shape[1],), fv.shape)
    present = neighbours >= 0
    safe = np.where(present, neighbours, 0)
    out = np.tile(bv, (fv.shape[0], 1))
    for offset in range(wv.shape[0]):
        rows = present[offset]
        if rows.any():
            out[rows] += fv[safe[offset, rows]] @ wv[offset]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_features = np.zeros_like(fv)
        grad_weight = np.zeros_like(wv)
        for offset in range(wv.shape[0]):
            rows = present[offset]
            if not rows.any():
                continue
            sources = safe[offset, rows]
            grad_weight[offset] = fv[sources].T @ g[rows]
            np.add.at(grad_features, sources, g[rows] @ wv[offset].T)
        return grad_features, grad_weight, g.sum(axis=0)

    return _emit("sparse_conv3d", out, (features, weight, bias), _backward)
