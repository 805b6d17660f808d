"""Static heatmap export for magnitude, consensus and attention maps."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

COLORMAPS = ("gray", "turbo")
MID_GRAY = 128


def _turbo_lut() -> np.ndarray:
    from matplotlib import colormaps
    return (colormaps["turbo"](np.linspace(0.0, 1.0, 256))[:, :3] * 255 + 0.5).astype(np.uint8)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Min-max map to 0..255; a constant map becomes mid-gray."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        values = values.squeeze()
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("map contains non-finite values")
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full(values.shape, MID_GRAY, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255).astype(np.uint8)


def render(values: np.ndarray, colormap: str = "gray") -> Image.Image:
    if colormap not in COLORMAPS:
        raise ValueError(f"colormap must be one of {COLORMAPS}")
    levels = to_uint8(values)
    if colormap == "gray":
        return Image.fromarray(levels, mode="L")
    return Image.fromarray(_turbo_lut()[levels], mode="RGB")


def png_bytes(values: np.ndarray, colormap: str = "gray") -> bytes:
    buf = io.BytesIO()
    render(values, colormap).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def save_heatmap(values: np.ndarray, path, colormap: str = "gray") -> Path:
    """Write an 8-bit PNG; the same map always produces the same bytes."""
    path = Path(path)
    data = png_bytes(values, colormap)
    path.write_bytes(data)
    return path
