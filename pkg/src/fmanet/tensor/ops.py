"""Layer operations on NCHW tensors, each with its hand-written backward."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .core import Tensor, kink_decision, make_node


def _check_rank(x: Tensor, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise DimensionError(f"{what} expects a rank-{rank} tensor, got shape {x.shape}")


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weight`` (F, C, k, k)."""
    _check_rank(x, 4, "conv2d input")
    _check_rank(weight, 4, "conv2d kernel")
    n, c, h, w = x.shape
    f, kc, k, k2 = weight.shape
    if k != k2 or k % 2 == 0:
        raise DimensionError(f"kernel must be square with odd size, got {k}x{k2}")
    if kc != c:
        raise DimensionError(f"input has {c} channels but kernel expects {kc}")
    if padding < 0 or stride < 1:
        raise DimensionError("padding must be >= 0 and stride >= 1")
    if bias is not None and bias.shape != (f,):
        raise DimensionError(f"bias shape {bias.shape} does not match {f} filters")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError("kernel larger than padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    wmat = weight.data.reshape(f, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, f)
        gw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, k, k)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, backward)


def depthwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     padding: int = 0) -> Tensor:
    """Per-channel convolution: ``weight`` is (C, 1, k, k), stride 1."""
    _check_rank(x, 4, "depthwise_conv2d input")
    _check_rank(weight, 4, "depthwise_conv2d kernel")
    n, c, h, w = x.shape
    kc, mult, k, k2 = weight.shape
    if mult != 1:
        raise DimensionError("depthwise kernel channel multiplier must be 1")
    if kc != c:
        raise DimensionError(f"input has {c} channels but kernel has {kc}")
    if k != k2 or k % 2 == 0:
        raise DimensionError("kernel must be square with odd size")
    if bias is not None and bias.shape != (c,):
        raise DimensionError(f"bias shape {bias.shape} does not match {c} channels")
    ho, wo = h + 2 * padding - k + 1, w + 2 * padding - k + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kern = weight.data[:, 0]
    out = np.zeros((n, c, ho, wo), dtype=np.result_type(x.data, weight.data))
    for i in range(k):
        for j in range(k):
            out += kern[None, :, i, j, None, None] * xp[:, :, i:i + ho, j:j + wo]
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gw = gx = gb = None
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(k):
                for j in range(k):
                    gw[:, 0, i, j] = (g * xp[:, :, i:i + ho, j:j + wo]).sum(axis=(0, 2, 3))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + ho, j:j + wo] += kern[None, :, i, j, None, None] * g
            gx = gxp[:, :, padding:padding + h, padding:padding + w]
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


def maxpool2d(x: Tensor, window: int = 2, stride: int = 2) -> Tensor:
    """Non-overlapping max pooling (``window == stride``)."""
    _check_rank(x, 4, "maxpool2d input")
    if window != stride:
        raise DimensionError("only non-overlapping pooling (window == stride) is supported")
    n, c, h, w = x.shape
    if h % window or w % window:
        raise DimensionError(f"spatial extent {h}x{w} not divisible by pool window {window}")
    ho, wo = h // window, w // window
    blocks = x.data.reshape(n, c, ho, window, wo, window).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, window * window)
    arg = kink_decision(blocks.argmax(axis=-1))
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(n, c, h, w),)

    return make_node(out, (x,), backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x`` flattened to (N, D) times ``weight`` (D, out) plus ``bias``."""
    _check_rank(weight, 2, "dense weight")
    n = x.shape[0]
    xf = x.data.reshape(n, -1)
    if xf.shape[1] != weight.shape[0]:
        raise DimensionError(f"input length {xf.shape[1]} does not match weight rows {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError("dense bias does not match weight columns")
    out = xf @ weight.data
    if bias is not None:
        out = out + bias.data
    xshape = x.shape

    def backward(g):
        gx = (g @ weight.data.T).reshape(xshape) if x.requires_grad else None
        gw = xf.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = kink_decision(x.data > 0)  # derivative at exactly 0 is 0
    return make_node(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid_array(z: np.ndarray) -> np.ndarray:
    # Two-branch form avoids overflow in exp for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = sigmoid_array(x.data)
    return make_node(s, (x,), lambda g: (g * s * (1 - s),))


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

def _normalize_backward(g_hat, xhat, inv_std, axes):
    m = np.prod([g_hat.shape[a] for a in axes])
    s1 = g_hat.sum(axis=axes, keepdims=True)
    s2 = (g_hat * xhat).sum(axis=axes, keepdims=True)
    return inv_std / m * (m * g_hat - s1 - xhat * s2)


def layer_norm_spatial(x: Tensor, scale: Tensor, shift: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalise every (sample, channel) map over H x W; per-channel affine."""
    _check_rank(x, 4, "layer_norm_spatial input")
    n, c, h, w = x.shape
    if h * w == 0:
        raise DimensionError("layer norm over an empty spatial extent")
    if scale.shape != (c,) or shift.shape != (c,):
        raise DimensionError("layer norm scale/shift must have one entry per channel")
    axes = (2, 3)
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = xc * inv_std
    sc = scale.data[None, :, None, None]
    out = xhat * sc + shift.data[None, :, None, None]

    def backward(g):
        gx = _normalize_backward(g * sc, xhat, inv_std, axes) if x.requires_grad else None
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return make_node(out, (x, scale, shift), backward)


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    updates: int = field(default=0)

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum: float = 0.1, epsilon: float = 1e-5):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype), momentum, epsilon)


def batch_norm2d(x: Tensor, scale: Tensor, shift: Tensor, state: BatchNormState,
                 train: bool = True) -> Tensor:
    """Per-channel normalisation over (N, H, W); EMA of statistics in train mode."""
    _check_rank(x, 4, "batch_norm2d input")
    n, c, h, w = x.shape
    if n == 0:
        raise DimensionError("batch norm on an empty batch")
    if scale.shape != (c,) or shift.shape != (c,):
        raise DimensionError("batch norm scale/shift must have one entry per channel")
    sc = scale.data[None, :, None, None]
    axes = (0, 2, 3)
    if train:
        mu = x.data.mean(axis=axes, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        m = n * h * w
        unbiased = var.ravel() * (m / (m - 1)) if m > 1 else var.ravel()
        mom = state.momentum
        state.running_mean = ((1 - mom) * state.running_mean + mom * mu.ravel()).astype(state.running_mean.dtype)
        state.running_var = ((1 - mom) * state.running_var + mom * unbiased).astype(state.running_var.dtype)
        state.updates += 1
    else:
        mu = state.running_mean.astype(x.dtype)[None, :, None, None]
        xc = x.data - mu
        var = state.running_var.astype(x.dtype)[None, :, None, None]
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = xc * inv_std
    out = xhat * sc + shift.data[None, :, None, None]

    def backward(g):
        gx = None
        if x.requires_grad:
            g_hat = g * sc
            gx = _normalize_backward(g_hat, xhat, inv_std, axes) if train else g_hat * inv_std
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return make_node(out.astype(x.dtype, copy=False), (x, scale, shift), backward)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy_with_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to ``logits``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError("logits must be (N, C) with one label per row")
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1
    return float(loss), grad / n


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    loss, grad = cross_entropy_with_grad(logits.data, labels)
    return make_node(np.asarray(loss, dtype=logits.dtype), (logits,), lambda g: (g * grad,))
