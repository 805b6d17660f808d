"""Magnitude-Modulated Combined Optical Flow (MM-COF).

The two phase flows (onset->apex, apex->offset) are reduced to magnitude
maps, min-max normalised per sample, summed with phase weights and then
re-weighted piecewise: amplified above an upper threshold, attenuated below
a lower one. Thresholds are either fixed or derived from the map's own mean
and standard deviation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowField, flow_magnitude


@dataclass(frozen=True)
class ModulationConfig:
    mode: str = "adaptive"
    alpha: float = 0.5
    beta: float = 1.8
    k_upper: float = 2.0
    k_lower: float = 1.0
    w1: float = 2.0
    w2: float = 0.5

    def __post_init__(self):
        if self.mode not in ("manual", "adaptive"):
            raise ValueError(f"mode must be 'manual' or 'adaptive', got {self.mode!r}")
        if self.mode == "manual" and not self.alpha < self.beta:
            raise ValueError("manual thresholds require alpha < beta")
        if not (self.w1 >= 1 >= self.w2 > 0):
            raise ValueError("weights must satisfy w1 >= 1 >= w2 > 0")
        if self.k_upper < 0 or self.k_lower < 0:
            raise ValueError("k_upper and k_lower must be non-negative")


def normalize_magnitude(m: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant map becomes all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi <= lo:
        return np.zeros(m.shape, dtype=np.float32)
    return ((m - lo) / (hi - lo)).astype(np.float32)


def combine_flows(m1n: np.ndarray, m2n: np.ndarray, theta1: float = 1.0, theta2: float = 1.0) -> np.ndarray:
    m1n = np.asarray(m1n, dtype=np.float32)
    m2n = np.asarray(m2n, dtype=np.float32)
    if m1n.shape != m2n.shape:
        raise ValueError(f"magnitude maps differ in shape: {m1n.shape} vs {m2n.shape}")
    if theta1 < 0 or theta2 < 0:
        raise ValueError("phase weights must be non-negative")
    return (np.float32(theta1) * m1n + np.float32(theta2) * m2n).astype(np.float32)


def adaptive_thresholds(mc: np.ndarray, k_upper: float = 2.0, k_lower: float = 1.0) -> tuple[float, float]:
    """Return ``(lower, upper) = (max(mu - k_lower*sd, 0), mu + k_upper*sd)``.

    Population standard deviation. The lower value plays the role of the
    attenuation threshold and the upper one the amplification threshold.
    """
    mc = np.asarray(mc, dtype=np.float64)
    if mc.size == 0:
        raise ValueError("adaptive thresholds of an empty map")
    mu = mc.mean()
    sd = np.sqrt(((mc - mu) ** 2).mean())
    lower = max(mu - k_lower * sd, 0.0)
    upper = mu + k_upper * sd
    return float(lower), float(max(upper, lower))


def modulate(mc: np.ndarray, alpha: float, beta: float, w1: float = 2.0, w2: float = 0.5) -> np.ndarray:
    """Scale by ``w1`` above ``beta``, by ``w2`` below ``alpha``, identity between."""
    if alpha > beta:
        raise ValueError(f"alpha ({alpha}) must not exceed beta ({beta})")
    if w1 <= 0 or w2 <= 0:
        raise ValueError("modulation weights must be positive")
    mc = np.asarray(mc, dtype=np.float32)
    out = np.where(mc > beta, np.float32(w1) * mc, mc)
    out = np.where(mc < alpha, np.float32(w2) * mc, out)
    return out.astype(np.float32)


def thresholds_for(mc: np.ndarray, config: ModulationConfig) -> tuple[float, float]:
    if config.mode == "manual":
        return config.alpha, config.beta
    return adaptive_thresholds(mc, config.k_upper, config.k_lower)


def build_mmcof(flow_on: FlowField, flow_off: FlowField, config: ModulationConfig | None = None,
                theta1: float = 1.0, theta2: float = 1.0) -> np.ndarray:
    """Stack ``(u_combined, v_combined, M_mod)`` into a (3, H, W) float32 image."""
    config = config or ModulationConfig()
    if flow_on.shape != flow_off.shape:
        raise ValueError(f"phase flows differ in shape: {flow_on.shape} vs {flow_off.shape}")
    mc = combine_flows(normalize_magnitude(flow_magnitude(flow_on)),
                       normalize_magnitude(flow_magnitude(flow_off)), theta1, theta2)
    alpha, beta = thresholds_for(mc, config)
    m_mod = modulate(mc, alpha, beta, config.w1, config.w2)
    u = np.float32(theta1) * flow_on.u + np.float32(theta2) * flow_off.u
    v = np.float32(theta1) * flow_on.v + np.float32(theta2) * flow_off.v
    return np.stack([u, v, m_mod]).astype(np.float32)
