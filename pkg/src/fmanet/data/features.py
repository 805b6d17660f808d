"""Frame triplets to phase flows to model inputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..flow import DEFAULT_ITERATIONS, DEFAULT_SMOOTHNESS, FlowField, estimate_flow, flow_magnitude
from ..mmcof import ModulationConfig, build_mmcof

REPRESENTATIONS = ("fmanet", "mmcof", "single")


@dataclass(frozen=True)
class FlowSettings:
    iterations: int = DEFAULT_ITERATIONS
    smoothness: float = DEFAULT_SMOOTHNESS
    presmooth: float = 1.0  # Gaussian sigma applied to frames before estimation; 0 disables
    size: int | None = None  # resize frames to size x size first


def resize_frame(frame: np.ndarray, size: int) -> np.ndarray:
    if frame.shape == (size, size):
        return frame
    factors = (size / frame.shape[0], size / frame.shape[1])
    out = ndimage.zoom(frame.astype(np.float32), factors, order=1, mode="nearest", grid_mode=True)
    return np.clip(out, 0.0, 1.0)


def phase_flows(frames: Sequence[np.ndarray], settings: FlowSettings | None = None):
    """Onset-apex and apex-offset flow for an (onset, apex, offset) triplet."""
    settings = settings or FlowSettings()
    prepared = []
    for f in frames:
        f = np.asarray(f, dtype=np.float32)
        if settings.size is not None:
            f = resize_frame(f, settings.size)
        if settings.presmooth > 0:
            f = ndimage.gaussian_filter(f, settings.presmooth, mode="nearest")
        prepared.append(f)
    onset, apex, offset = prepared
    flow_on = estimate_flow(onset, apex, settings.iterations, settings.smoothness)
    flow_off = estimate_flow(apex, offset, settings.iterations, settings.smoothness)
    return flow_on, flow_off


def fmanet_input(flow_on: FlowField, flow_off: FlowField) -> dict[str, np.ndarray]:
    """Per-phase flow images ``(u, v, M)`` and magnitude maps for one sample.

    Both phases are divided by one shared factor, the larger of the two peak
    magnitudes, so relative phase strength survives and magnitudes lie in [0, 1].
    """
    m_on, m_off = flow_magnitude(flow_on), flow_magnitude(flow_off)
    peak = max(float(m_on.max()), float(m_off.max()))
    scale = np.float32(1.0 / peak) if peak > 0 else np.float32(0.0)
    out = {}
    for tag, field, m in (("on", flow_on, m_on), ("off", flow_off, m_off)):
        out[f"i_{tag}"] = np.stack([field.u, field.v, m]) * scale
        out[f"m_{tag}"] = m * scale
    return {k: v.astype(np.float32) for k, v in out.items()}


def sample_input(flow_on: FlowField, flow_off: FlowField, representation: str,
                 modulation: ModulationConfig | None = None, theta1: float = 1.0,
                 theta2: float = 1.0) -> dict[str, np.ndarray]:
    """Model input dict for one sample.

    ``fmanet`` feeds both phases to FMANet; ``mmcof`` is the (u, v, M_mod)
    image for SCNN; ``single`` is the same image built from the onset-apex
    phase alone (``theta2 = 0``).
    """
    if representation == "fmanet":
        return fmanet_input(flow_on, flow_off)
    if representation == "mmcof":
        return {"x": build_mmcof(flow_on, flow_off, modulation, theta1, theta2)}
    if representation == "single":
        return {"x": build_mmcof(flow_on, flow_off, modulation, theta1, 0.0)}
    raise ValueError(f"representation must be one of {REPRESENTATIONS}, got {representation!r}")


def stack_inputs(items: Sequence[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    if not items:
        return {}
    return {k: np.stack([it[k] for it in items]) for k in items[0]}
