"""Phase-aware consensus fusion (FFB) and soft motion attention (SMAB)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..tensor import (BatchNormState, ParameterSet, Tensor, batch_norm2d, conv2d,
                      depthwise_conv2d, layer_norm_spatial, relu, sigmoid)


@dataclass(frozen=True)
class FmanetHyper:
    theta: float = 1.0      # consensus exponent
    tau: float = 0.1        # coherence temperature
    c_mid: int = 16
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.c_mid < 1:
            raise ValueError("c_mid must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def add_conv(params: ParameterSet, rng, name: str, c_out: int, c_in: int, k: int) -> None:
    params.add(f"{name}.weight", he_uniform(rng, (c_out, c_in, k, k), c_in * k * k), "conv-kernel")
    params.add(f"{name}.bias", np.zeros(c_out, np.float32), "conv-bias")


def _as_maps(m) -> np.ndarray:
    m = np.asarray(m)
    return m[None] if m.ndim == 2 else m


# ---------------------------------------------------------------------------
# motion cues (constants with respect to the learnable parameters)
# ---------------------------------------------------------------------------

def ffb_consensus(m_on: np.ndarray, m_off: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    """Strength x similarity agreement map, max-normalised over each sample's H x W.

    Accepts (H, W) maps or (B, H, W) stacks and returns the same shape.
    """
    m_on = np.asarray(m_on, dtype=np.float64)
    m_off = np.asarray(m_off, dtype=np.float64)
    if m_on.shape != m_off.shape:
        raise DimensionError(f"magnitude maps differ in shape: {m_on.shape} vs {m_off.shape}")
    strength = 0.5 * (m_on + m_off)
    sim = 1.0 - np.abs(m_on - m_off) / (m_on + m_off + epsilon)
    raw = np.maximum(0.0, strength * sim)
    peak = raw.max(axis=(-2, -1), keepdims=True)
    return raw / (peak + epsilon)


def smab_cues(m_on: np.ndarray, m_off: np.ndarray, tau: float, epsilon: float = 1e-6):
    """Geometric-mean magnitude and exponential coherence maps."""
    m_on = np.asarray(m_on, dtype=np.float64)
    m_off = np.asarray(m_off, dtype=np.float64)
    if m_on.shape != m_off.shape:
        raise DimensionError(f"magnitude maps differ in shape: {m_on.shape} vs {m_off.shape}")
    joint = np.sqrt(m_on * m_off + epsilon)
    coherence = np.exp(-np.abs(m_on - m_off) / tau)
    return joint, coherence


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------

class FusionBlock:
    """Learned gate interpolating onset and offset features, steered by consensus."""

    def __init__(self, params: ParameterSet, rng, hyper: FmanetHyper, in_channels: int = 3,
                 prefix: str = "ffb"):
        self.params = params
        self.hyper = hyper
        self.prefix = prefix
        c = hyper.c_mid
        add_conv(params, rng, f"{prefix}.conv_on", c, in_channels, 3)
        add_conv(params, rng, f"{prefix}.conv_off", c, in_channels, 3)
        add_conv(params, rng, f"{prefix}.conv_graw", c, c, 3)
        add_conv(params, rng, f"{prefix}.conv_out", c, c, 3)
        params.add(f"{prefix}.bn.scale", np.ones(c, np.float32), "bn-scale")
        params.add(f"{prefix}.bn.shift", np.zeros(c, np.float32), "bn-shift")
        self.bn_state = BatchNormState.create(c)

    def _conv(self, x, name):
        p = self.params
        return conv2d(x, p[f"{self.prefix}.{name}.weight"], p[f"{self.prefix}.{name}.bias"], padding=1)

    def __call__(self, i_on: Tensor, i_off: Tensor, m_on, m_off, train: bool = True,
                 trace: dict | None = None) -> Tensor:
        if i_on.shape != i_off.shape:
            raise DimensionError("onset and offset inputs differ in shape")
        x_on = self._conv(i_on, "conv_on")
        x_off = self._conv(i_off, "conv_off")
        consensus = ffb_consensus(_as_maps(m_on), _as_maps(m_off), self.hyper.epsilon)
        if consensus.shape != (i_on.shape[0],) + i_on.shape[2:]:
            raise DimensionError("magnitude maps do not match the flow images")
        weight = Tensor((consensus ** self.hyper.theta)[:, None].astype(x_on.dtype))
        avg = 0.5 * (x_on + x_off)
        g = sigmoid(self._conv(avg, "conv_graw")) * weight
        f_raw = x_off + g * (x_on - x_off)
        p = self.params
        out = relu(batch_norm2d(self._conv(f_raw, "conv_out"), p[f"{self.prefix}.bn.scale"],
                                p[f"{self.prefix}.bn.shift"], self.bn_state, train=train))
        if trace is not None:
            trace.update(x_on=x_on.data, x_off=x_off.data, consensus=consensus, gate=g.data,
                         f_raw=f_raw.data, f_fused=out.data)
        return out


class MotionAttentionBlock:
    """Residual-centred spatial gate from joint magnitude and coherence cues."""

    def __init__(self, params: ParameterSet, rng, hyper: FmanetHyper, prefix: str = "smab"):
        self.params = params
        self.hyper = hyper
        self.prefix = prefix
        params.add(f"{prefix}.ln.scale", np.ones(2, np.float32), "ln-scale")
        params.add(f"{prefix}.ln.shift", np.zeros(2, np.float32), "ln-shift")
        params.add(f"{prefix}.conv_dw.weight", he_uniform(rng, (2, 1, 3, 3), 9), "conv-kernel")
        params.add(f"{prefix}.conv_dw.bias", np.zeros(2, np.float32), "conv-bias")
        add_conv(params, rng, f"{prefix}.conv_pw", 1, 2, 1)

    def __call__(self, f_fused: Tensor, m_on, m_off, trace: dict | None = None) -> Tensor:
        joint, coherence = smab_cues(_as_maps(m_on), _as_maps(m_off), self.hyper.tau, self.hyper.epsilon)
        if joint.shape != (f_fused.shape[0],) + f_fused.shape[2:]:
            raise DimensionError("magnitude maps do not match the fused feature map")
        p, n = self.params, self.prefix
        cues = Tensor(np.stack([joint, coherence], axis=1).astype(f_fused.dtype))
        f_in = layer_norm_spatial(cues, p[f"{n}.ln.scale"], p[f"{n}.ln.shift"])
        hidden = relu(depthwise_conv2d(f_in, p[f"{n}.conv_dw.weight"], p[f"{n}.conv_dw.bias"], padding=1))
        g_attn = sigmoid(conv2d(hidden, p[f"{n}.conv_pw.weight"], p[f"{n}.conv_pw.bias"]))
        factor = 0.5 + g_attn
        out = f_fused * factor
        if trace is not None:
            trace.update(joint=joint, coherence=coherence, g_attn=g_attn.data, factor=factor.data,
                         f_out=out.data)
        return out

