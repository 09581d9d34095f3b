"""Dense float64 arrays that record a reverse-mode differentiation graph."""

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError, DimensionError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
ArrayLike = Union["DiffArray", np.ndarray, float, int]

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Record no graph inside the block; forward values are unchanged."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


@dataclass(frozen=True)
class Node:
    """The operation that produced an array, and how to push gradients back."""

    op: str
    inputs: Tuple["DiffArray", ...]
    backward: BackwardFn


class DiffArray:
    """A float64 array plus an optional gradient and producing node."""

    # ndarray op DiffArray must dispatch to the DiffArray operator
    __array_priority__ = 100

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[Node] = None
        self.name = name

    @classmethod
    def from_op(
        cls,
        values: np.ndarray,
        inputs: Sequence["DiffArray"],
        backward: BackwardFn,
        op: str,
    ) -> "DiffArray":
        """Wrap the result of a primitive, recording a node if any input needs grad."""
        out = cls(values)
        if _grad_enabled and any(x.requires_grad for x in inputs):
            out.requires_grad = True
            out.node = Node(op, tuple(inputs), backward)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"DiffArray(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.values.reshape(-1)[0]) if self.size == 1 else float(self.values)

    def numpy(self) -> np.ndarray:
        return self.values

    def detach(self) -> "DiffArray":
        return DiffArray(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> Dict["DiffArray", np.ndarray]:
        return backward(self)

    def __add__(self, other: ArrayLike) -> "DiffArray":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "DiffArray":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "DiffArray":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "DiffArray":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "DiffArray":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "DiffArray":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "DiffArray":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "DiffArray":
        return div(other, self)

    def __neg__(self) -> "DiffArray":
        return neg(self)

    def __pow__(self, exponent: float) -> "DiffArray":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "DiffArray":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "DiffArray":
        return matmul(other, self)

    def __getitem__(self, key) -> "DiffArray":
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "DiffArray":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "DiffArray":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "DiffArray":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int) -> "DiffArray":
        return swapaxes(self, a, b)

    @property
    def T(self) -> "DiffArray":
        return swapaxes(self, -1, -2)


def as_diff(value: ArrayLike) -> DiffArray:
    return value if isinstance(value, DiffArray) else DiffArray(value)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: DiffArray, b: DiffArray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape)


def add(a: ArrayLike, b: ArrayLike) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    _broadcast_shape("add", a, b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return DiffArray.from_op(a.values + b.values, (a, b), _backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    _broadcast_shape("sub", a, b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return DiffArray.from_op(a.values - b.values, (a, b), _backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    _broadcast_shape("mul", a, b)

    def _backward(g):
        return unbroadcast(g * b.values, a.shape), unbroadcast(g * a.values, b.shape)

    return DiffArray.from_op(a.values * b.values, (a, b), _backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    _broadcast_shape("div", a, b)
    out = a.values / b.values

    def _backward(g):
        return unbroadcast(g / b.values, a.shape), unbroadcast(-g * out / b.values, b.shape)

    return DiffArray.from_op(out, (a, b), _backward, "div")


def neg(a: DiffArray) -> DiffArray:
    return DiffArray.from_op(-a.values, (a,), lambda g: (-g,), "neg")


def power(a: DiffArray, exponent: float) -> DiffArray:
    def _backward(g):
        return (g * exponent * a.values ** (exponent - 1),)

    return DiffArray.from_op(a.values ** exponent, (a,), _backward, "pow")


def matmul(a: ArrayLike, b: ArrayLike) -> DiffArray:
    a, b = as_diff(a), as_diff(b)
    av, bv = a.values, b.values
    if av.ndim == 0 or bv.ndim == 0:
        raise DimensionError("matmul", a.shape, b.shape)
    if av.ndim == 1 and bv.ndim == 1:
        if av.shape != bv.shape:
            raise DimensionError("matmul", a.shape, b.shape)
        return reduce_sum(mul(a, b))
    inner_b = bv.shape[0] if bv.ndim == 1 else bv.shape[-2]
    if av.shape[-1] != inner_b:
        raise DimensionError("matmul", a.shape, b.shape)
    out = av @ bv

    def _backward(g):
        a2 = av[None, :] if av.ndim == 1 else av
        b2 = bv[:, None] if bv.ndim == 1 else bv
        g2 = g
        if av.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bv.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a2, -1, -2) @ g2
        if av.ndim == 1:
            ga = ga.squeeze(-2)
        if bv.ndim == 1:
            gb = gb.squeeze(-1)
        return unbroadcast(ga, av.shape), unbroadcast(gb, bv.shape)

    return DiffArray.from_op(out, (a, b), _backward, "matmul")


def getitem(a: DiffArray, key) -> DiffArray:
    def _backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, key, g)
        return (full,)

    return DiffArray.from_op(np.array(a.values[key]), (a,), _backward, "getitem")


def reshape(a: DiffArray, shape: Tuple[int, ...]) -> DiffArray:
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", a.shape, tuple(shape))
    return DiffArray.from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def swapaxes(a: DiffArray, axis1: int, axis2: int) -> DiffArray:
    return DiffArray.from_op(
        np.swapaxes(a.values, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes"
    )


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def reduce_sum(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    def _backward(g):
        return (_expand_reduced(g, a.shape, axis, keepdims),)

    return DiffArray.from_op(np.sum(a.values, axis=axis, keepdims=keepdims), (a,), _backward, "sum")


def reduce_mean(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    out = np.mean(a.values, axis=axis, keepdims=keepdims)
    count = a.size / max(np.size(out), 1)

    def _backward(g):
        return (_expand_reduced(g, a.shape, axis, keepdims) / count,)

    return DiffArray.from_op(out, (a,), _backward, "mean")


def _topological_order(root: DiffArray) -> List[DiffArray]:
    order: List[DiffArray] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        arr, expanded = stack.pop()
        if expanded:
            order.append(arr)
            continue
        if id(arr) in visited:
            continue
        visited.add(id(arr))
        stack.append((arr, True))
        if arr.node is not None:
            for parent in arr.node.inputs:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss: DiffArray) -> Dict[DiffArray, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    Returns a map from each reached leaf to its accumulated gradient.
    Calling twice without ``zero_grad`` adds the gradients up.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar target, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward target carries no graph")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    leaves: Dict[DiffArray, np.ndarray] = {}
    for arr in reversed(_topological_order(loss)):
        g = pending.pop(id(arr), None)
        if g is None:
            continue
        if arr.node is None:
            arr.grad = np.array(g, copy=True) if arr.grad is None else arr.grad + g
            leaves[arr] = arr.grad
            continue
        for parent, pg in zip(arr.node.inputs, arr.node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg
    return leaves
