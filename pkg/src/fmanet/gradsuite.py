"""Ready-made finite-difference checks for every layer type and the full network."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .model import FMANet
from .tensor import (BatchNormState, GradReport, Tensor, batch_norm2d, conv2d, dense,
                     depthwise_conv2d, grad_check, layer_norm_spatial, maxpool2d, relu, sigmoid,
                     softmax_cross_entropy)

Case = tuple[Callable[[], Tensor], dict[str, Tensor]]


def _leaf(rng, *shape, scale=1.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _probe(out: Tensor, rng) -> Tensor:
    """Scalar with a generic upstream gradient: sum(out * R) for fixed random R."""
    r = Tensor(rng.standard_normal(out.shape).astype(out.dtype))
    return (out * r).sum()


def _case(build: Callable[[dict], Tensor], tensors: dict[str, Tensor], seed: int) -> Case:
    def loss():
        out = build(tensors)
        return _probe(out, np.random.default_rng(seed + 1000))
    return loss, tensors


def layer_cases(seed: int = 0) -> dict[str, Case]:
    rng = np.random.default_rng(seed)
    cases: dict[str, Case] = {}
    t = {"x": _leaf(rng, 2, 3, 7, 7), "w": _leaf(rng, 4, 3, 3, 3, scale=0.3), "b": _leaf(rng, 4)}
    cases["conv2d"] = _case(lambda t: conv2d(t["x"], t["w"], t["b"], padding=1), t, seed)
    t = {"x": _leaf(rng, 2, 2, 8, 8), "w": _leaf(rng, 3, 2, 3, 3, scale=0.3), "b": _leaf(rng, 3)}
    cases["conv2d_stride2"] = _case(lambda t: conv2d(t["x"], t["w"], t["b"], stride=2), t, seed)
    t = {"x": _leaf(rng, 2, 3, 6, 6), "w": _leaf(rng, 3, 1, 3, 3, scale=0.3), "b": _leaf(rng, 3)}
    cases["depthwise_conv2d"] = _case(lambda t: depthwise_conv2d(t["x"], t["w"], t["b"], padding=1), t, seed)
    t = {"x": _leaf(rng, 2, 3, 6, 6)}
    cases["maxpool2d"] = _case(lambda t: maxpool2d(t["x"]), t, seed)
    t = {"x": _leaf(rng, 3, 2, 2, 3), "w": _leaf(rng, 12, 5, scale=0.3), "b": _leaf(rng, 5)}
    cases["dense"] = _case(lambda t: dense(t["x"], t["w"], t["b"]), t, seed)
    t = {"x": _leaf(rng, 2, 3, 5, 5)}
    cases["relu"] = _case(lambda t: relu(t["x"]), t, seed)
    t = {"x": _leaf(rng, 2, 3, 5, 5, scale=2.0)}
    cases["sigmoid"] = _case(lambda t: sigmoid(t["x"]), t, seed)
    t = {"x": _leaf(rng, 2, 2, 5, 5), "scale": _leaf(rng, 2), "shift": _leaf(rng, 2)}
    cases["layer_norm"] = _case(lambda t: layer_norm_spatial(t["x"], t["scale"], t["shift"]), t, seed)
    t = {"x": _leaf(rng, 4, 3, 4, 4), "scale": _leaf(rng, 3), "shift": _leaf(rng, 3)}
    cases["batch_norm"] = _case(
        lambda t: batch_norm2d(t["x"], t["scale"], t["shift"], BatchNormState.create(3), train=True), t, seed)
    logits = {"z": _leaf(rng, 6, 5, scale=2.0)}
    labels = rng.integers(0, 5, size=6)
    cases["softmax_cross_entropy"] = (lambda: softmax_cross_entropy(logits["z"], labels), logits)
    return cases


def synthetic_batch(rng, batch: int, size: int) -> dict[str, np.ndarray]:
    """Random but well-formed FMANet inputs (magnitudes match the flow images)."""
    inputs = {}
    for tag in ("on", "off"):
        uv = rng.standard_normal((batch, 2, size, size))
        m = np.hypot(uv[:, 0], uv[:, 1])
        inputs[f"i_{tag}"] = np.concatenate([uv, m[:, None]], axis=1)
        inputs[f"m_{tag}"] = m
    return inputs


def fmanet_case(size: int = 16, batch: int = 3, num_classes: int = 5, hidden: int = 32,
                seed: int = 0) -> tuple[Case, FMANet]:
    """Cross-entropy of a whole FMANet (train-mode batch norm) at toy resolution."""
    model = FMANet(num_classes, size, hidden=hidden, seed=seed)
    rng = np.random.default_rng(seed)
    inputs = synthetic_batch(rng, batch, size)
    labels = rng.integers(0, num_classes, size=batch)
    model.params.astype(np.float64)

    def loss():
        return softmax_cross_entropy(model.forward(inputs, train=True), labels)

    return (loss, dict(model.params.items())), model


def run_layer_checks(seed: int = 0, tolerance: float = 1e-3) -> dict[str, GradReport]:
    return {name: grad_check(fn, tensors, tolerance=tolerance, seed=seed)
            for name, (fn, tensors) in layer_cases(seed).items()}


def run_network_check(size: int = 16, seed: int = 0, tolerance: float = 1e-3) -> GradReport:
    (fn, tensors), _ = fmanet_case(size=size, seed=seed)
    return grad_check(fn, tensors, tolerance=tolerance, seed=seed)
