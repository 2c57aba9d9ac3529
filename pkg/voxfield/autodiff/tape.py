"""Reverse-mode gradient tape for the voxfield pipeline.

Every differentiable operation in :mod:`voxfield.autodiff.ops` records a
node on the active :class:`Tape` when at least one of its inputs carries a
gradient. :meth:`Tape.backward` then walks the nodes in reverse order and
applies each node's vector-Jacobian product.

Inputs that are plain :class:`numpy.ndarray` values are constants: they
never receive gradients. Passing a value through
:func:`voxfield.autodiff.ops.detach` is the explicit stop-gradient.
"""

from __future__ import annotations

import contextvars
import dataclasses as dc
import logging
import typing as typ

import numpy as np
import numpy.typing as npt

from voxfield.errors import NumericalError

LOGGER = logging.getLogger(__name__)

Backward = typ.Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_active_tape: contextvars.ContextVar[Tape | None] = contextvars.ContextVar(
    "voxfield_active_tape", default=None
)


class Variable:
    """A float64 array that may participate in gradient recording."""

    __slots__ = ("grad", "name", "requires_grad", "tracked", "value")
    __array_priority__ = 100.0

    def __init__(
        self,
        value: npt.ArrayLike,
        *,
        name: str | None = None,
        requires_grad: bool = False,
    ) -> None:
        """Wrap ``value`` as a float64 array."""
        self.value: np.ndarray = np.array(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.name = name
        self.requires_grad = requires_grad
        self.tracked = requires_grad

    def __repr__(self) -> str:
        """Return a compact description with the shape and name."""
        label = f" {self.name!r}" if self.name else ""
        return f"Variable{label}(shape={self.value.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        """Return the shape of the wrapped array."""
        return self.value.shape

    @property
    def ndim(self) -> int:
        """Return the rank of the wrapped array."""
        return self.value.ndim

    @property
    def size(self) -> int:
        """Return the element count of the wrapped array."""
        return self.value.size

    def zero_grad(self) -> None:
        """Reset the accumulated gradient to zeros."""
        self.grad = np.zeros_like(self.value)

    # Operator sugar delegates to the registered ops.
    def __add__(self, other: object) -> Variable:
        """Return ``self + other``."""
        from . import ops

        return typ.cast("Variable", ops.add(self, other))

    def __radd__(self, other: object) -> Variable:
        """Return ``other + self``."""
        from . import ops

        return typ.cast("Variable", ops.add(other, self))

    def __sub__(self, other: object) -> Variable:
        """Return ``self - other``."""
        from . import ops

        return typ.cast("Variable", ops.sub(self, other))

    def __rsub__(self, other: object) -> Variable:
        """Return ``other - self``."""
        from . import ops

        return typ.cast("Variable", ops.sub(other, self))

    def __mul__(self, other: object) -> Variable:
        """Return ``self * other``."""
        from . import ops

        return typ.cast("Variable", ops.mul(self, other))

    def __rmul__(self, other: object) -> Variable:
        """Return ``other * self``."""
        from . import ops

        return typ.cast("Variable", ops.mul(other, self))

    def __truediv__(self, other: object) -> Variable:
        """Return ``self / other``."""
        from . import ops

        return typ.cast("Variable", ops.div(self, other))

    def __rtruediv__(self, other: object) -> Variable:
        """Return ``other / self``."""
        from . import ops

        return typ.cast("Variable", ops.div(other, self))

    def __neg__(self) -> Variable:
        """Return ``-self``."""
        from . import ops

        return typ.cast("Variable", ops.neg(self))

    def __pow__(self, exponent: float) -> Variable:
        """Return ``self ** exponent`` for a constant exponent."""
        from . import ops

        return typ.cast("Variable", ops.power(self, exponent))

    def __matmul__(self, other: object) -> Variable:
        """Return ``self @ other``."""
        from . import ops

        return typ.cast("Variable", ops.matmul(self, other))

    def __rmatmul__(self, other: object) -> Variable:
        """Return ``other @ self``."""
        from . import ops

        return typ.cast("Variable", ops.matmul(other, self))

    def __getitem__(self, index: object) -> Variable:
        """Return ``self[index]``."""
        from . import ops

        return typ.cast("Variable", ops.getitem(self, index))


@dc.dataclass(slots=True)
class _Node:
    op: str
    output: Variable
    inputs: tuple[object, ...]
    backward: Backward


class Tape:
    """Record of differentiable operations executed inside a ``with`` block."""

    def __init__(self) -> None:
        """Create an empty tape."""
        self._nodes: list[_Node] = []
        self._leaves: dict[int, Variable] = {}
        self._token: contextvars.Token[Tape | None] | None = None

    def __enter__(self) -> Tape:
        """Activate the tape for the current context."""
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *_exc: object) -> None:
        """Deactivate the tape."""
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        """Return the number of recorded nodes."""
        return len(self._nodes)

    @property
    def ops(self) -> tuple[str, ...]:
        """Return the recorded op names in execution order."""
        return tuple(node.op for node in self._nodes)

    def record(
        self,
        op: str,
        output: Variable,
        inputs: tuple[object, ...],
        backward: Backward,
    ) -> None:
        """Append a node for ``output`` computed from ``inputs``."""
        for entry in inputs:
            if isinstance(entry, Variable) and entry.requires_grad:
                self._leaves[id(entry)] = entry
        self._nodes.append(_Node(op, output, inputs, backward))

    def backward(self, loss: Variable) -> float:
        """Populate ``.grad`` on every leaf that ``loss`` depends on.

        Leaves recorded on the tape but unreachable from ``loss`` receive a
        zero gradient. Returns the scalar loss value.
        """
        if loss.value.size != 1:
            message = f"backward requires a scalar loss, got shape {loss.shape}"
            raise ValueError(message)
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self._nodes):
            upstream = grads.pop(id(node.output), None)
            if upstream is None:
                continue
            for entry, contribution in zip(
                node.inputs, node.backward(upstream), strict=True
            ):
                if contribution is None or not isinstance(entry, Variable):
                    continue
                if not entry.tracked:
                    continue
                if not np.all(np.isfinite(contribution)):
                    raise NumericalError.non_finite(node.op, "gradient")
                key = id(entry)
                previous = grads.get(key)
                grads[key] = (
                    contribution if previous is None else previous + contribution
                )
        for key, leaf in self._leaves.items():
            contribution = grads.get(key)
            leaf.grad = (
                np.zeros_like(leaf.value)
                if contribution is None
                else contribution.reshape(leaf.value.shape)
            )
        LOGGER.debug("backward over %d nodes, %d leaves", len(self), len(self._leaves))
        return float(loss.value.reshape(()))


def active_tape() -> Tape | None:
    """Return the tape recording in the current context, if any."""
    return _active_tape.get()


def backward(loss: Variable, tape: Tape | None = None) -> float:
    """Run :meth:`Tape.backward` on ``tape`` or the active tape."""
    target = tape if tape is not None else active_tape()
    if target is None:
        message = "backward called without an active tape"
        raise RuntimeError(message)
    return target.backward(loss)


def value_of(x: object) -> np.ndarray:
    """Return the numeric array behind ``x`` without recording anything."""
    if isinstance(x, Variable):
        return x.value
    return np.asarray(x, dtype=np.float64)
