"""First-order optimisers over a :class:`ParameterSet`."""
from __future__ import annotations

import numpy as np

from ..errors import StateError
from .core import Tensor
from .params import ParameterSet


class Optimizer:
    def __init__(self, params: ParameterSet, lr: float):
        self.params = params
        self.lr = float(lr)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def _grads(self):
        for name, t in self.params.items():
            if t.grad is None:
                raise StateError(f"parameter {name!r} has no gradient; run forward and backward first")
            yield name, t

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params: ParameterSet, lr: float = 1e-2, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self._velocity: dict[str, np.ndarray] = {}

    def step(self) -> None:
        for name, t in list(self._grads()):
            g = t.grad
            if self.momentum:
                v = self._velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[name] = v
                g = v
            t.data = (t.data - t.data.dtype.type(self.lr) * g).astype(t.dtype, copy=False)


class Adam(Optimizer):
    def __init__(self, params: ParameterSet, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        entries = list(self._grads())
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for name, t in entries:
            g = t.grad
            m = self._m.get(name, np.zeros_like(g))
            v = self._v.get(name, np.zeros_like(g))
            m = self.b1 * m + (1 - self.b1) * g
            v = self.b2 * v + (1 - self.b2) * g * g
            self._m[name], self._v[name] = m, v
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            t.data = (t.data - t.data.dtype.type(self.lr) * update).astype(t.dtype, copy=False)


def make_optimizer(kind: str, params: ParameterSet, lr: float) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def backward_and_step(loss: Tensor | None, optimizer: Optimizer) -> float:
    """Zero gradients, back-propagate ``loss`` and apply one optimiser step."""
    if loss is None or not isinstance(loss, Tensor) or not loss.requires_grad:
        raise StateError("no recorded forward pass to differentiate")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.data)
