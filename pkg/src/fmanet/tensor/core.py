"""Dense tensors with a small reverse-mode tape.

Only what the FMANet graph needs is supported: broadcasting elementwise
arithmetic, reshapes, concatenation and reductions. Layer ops live in
:mod:`fmanet.tensor.ops` and are built on :func:`make_node`.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NumericalError, StateError

DEFAULT_DTYPE = np.float32
_FLOAT_TYPES = (np.float32, np.float64)

# Discrete branch decisions (ReLU masks, pool argmax) can be recorded and later
# replayed, so finite differences can be taken on a fixed linear piece.
_kink_state: tuple | None = None


@contextlib.contextmanager
def record_kinks():
    """Collect the discrete branch decisions of every op run inside the block."""
    global _kink_state
    previous = _kink_state
    log: list = []
    _kink_state = ("record", log)
    try:
        yield log
    finally:
        _kink_state = previous


@contextlib.contextmanager
def replay_kinks(log: list):
    """Force ops inside the block to reuse decisions captured by :func:`record_kinks`."""
    global _kink_state
    previous = _kink_state
    _kink_state = ("replay", iter(log))
    try:
        yield
    finally:
        _kink_state = previous


def kink_decision(decision: np.ndarray) -> np.ndarray:
    """Return the branch decision an op should use (recorded or replayed)."""
    if _kink_state is None:
        return decision
    mode, store = _kink_state
    if mode == "record":
        store.append(decision.copy())
        return decision
    fixed = next(store, None)
    if fixed is None or fixed.shape != decision.shape:
        raise StateError("replayed branch decisions do not match the graph")
    return fixed


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.type not in _FLOAT_TYPES:
        arr = arr.astype(DEFAULT_DTYPE)
    return arr


class Tensor:
    """A numpy array plus an optional gradient and the op that produced it."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    # -- introspection -----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    # -- autodiff ----------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf requiring it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic --------------------------------------------------------
    def _lift(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._lift(other)
        return make_node(self.data + other.data, (self, other),
                         lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return make_node(self.data - other.data, (self, other),
                         lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        return make_node(a * b, (self, other),
                         lambda g: (_unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape)))

    __rmul__ = __mul__

    def __neg__(self):
        return make_node(-self.data, (self,), lambda g: (-g,))

    def sum(self) -> "Tensor":
        shape = self.shape
        return make_node(np.asarray(self.data.sum()), (self,),
                         lambda g: (np.broadcast_to(g, shape).copy(),))

    def mean(self) -> "Tensor":
        n = self.data.size
        shape = self.shape
        return make_node(np.asarray(self.data.mean()), (self,),
                         lambda g: (np.full(shape, g / n, dtype=g.dtype),))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return make_node(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))


def make_node(data: np.ndarray, parents: Iterable[Tensor],
              backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap an op result, recording ``backward`` only if some parent needs grads."""
    data = np.asarray(data)
    if not np.isfinite(data).all():
        raise NumericalError("non-finite value produced by tensor op")
    out = Tensor(data)
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)
