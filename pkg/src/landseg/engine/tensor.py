"""Tensor type and the reverse-mode tape."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class DimensionError(ValueError):
    """Raised when operand shapes do not fit an operation."""


class ParameterError(ValueError):
    """Raised for out-of-range scalar arguments (rates, strides, ...)."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype == np.float64:
        return arr
    return arr.astype(np.float32, copy=False)


class Tensor:
    """Dense float array that optionally records how it was produced.

    float32 is the working precision. float64 arrays are kept as-is so that
    gradient checks can run the same code paths in double precision.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = _as_array(data, dtype)
        if self.data.ndim == 0:
            self.data = self.data.reshape(())
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"
        self.name = name

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn, op: str) -> "Tensor":
        """Wrap the result of a primitive. The node is taped only if a parent needs a gradient."""
        out = cls(data, dtype=data.dtype)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
            out.op = op
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic sugar; implementations live in functional
    def __add__(self, other):
        from .functional import add
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from .functional import add, neg
        return add(self, neg(_lift(other, self)))

    def __rsub__(self, other):
        from .functional import add, neg
        return add(_lift(other, self), neg(self))

    def __mul__(self, other):
        from .functional import mul
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from .functional import neg
        return neg(self)

    def sum(self):
        from .functional import sum_all
        return sum_all(self)

    def mean(self):
        from .functional import mean_all
        return mean_all(self)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise DimensionError(f"seed gradient shape {grad.shape} != output shape {self.shape}")
        if not self.requires_grad:
            return

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(build_tape(self)):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


def _lift(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def build_tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (inputs first).

    Iterative DFS; parents are visited in argument order so the order is
    deterministic for a given graph.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order
