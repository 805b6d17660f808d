"""Dense optical flow (Horn-Schunck), Middlebury ``.flo`` I/O and magnitudes.

Frames are 2-D float arrays with intensities in [0, 1]; colour input is
reduced with ITU-R 601 luma weights.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import FormatError

FLO_MAGIC = 202021.25  # the float whose little-endian bytes spell "PIEH"
FLO_TAG = b"PIEH"

DEFAULT_ITERATIONS = 200
DEFAULT_SMOOTHNESS = 0.1

_HS_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12],
                       [1 / 6, 0.0, 1 / 6],
                       [1 / 12, 1 / 6, 1 / 12]])

LUMA_601 = (0.299, 0.587, 0.114)


@dataclass
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels, both of shape (H, W)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float32)
        self.v = np.asarray(self.v, dtype=np.float32)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError("u and v must be 2-D arrays of equal shape")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(self.u * factor, self.v * factor)

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return (self.u.tobytes() == other.u.tobytes() and self.v.tobytes() == other.v.tobytes()
                and self.shape == other.shape)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def to_gray(image: np.ndarray) -> np.ndarray:
    """Reduce an (H, W) or (H, W, 3|4) array to luma in the array's own scale."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.float32)
    if image.ndim == 3 and image.shape[2] in (3, 4):
        rgb = image[..., :3].astype(np.float64)
        return (rgb @ np.array(LUMA_601)).astype(np.float32)
    raise ValueError(f"cannot interpret image of shape {image.shape} as a frame")


def load_frame(path) -> np.ndarray:
    """Read a PNG/PGM (8- or 16-bit, grey or RGB) as float32 luma in [0, 1]."""
    with Image.open(path) as img:
        mode = img.mode
        arr = np.asarray(img)
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        gray = arr.astype(np.float32) / 65535.0
    elif mode == "F":
        gray = arr.astype(np.float32)
    else:
        gray = to_gray(arr) / 255.0
    return np.clip(gray, 0.0, 1.0).astype(np.float32)


def save_frame(path, frame: np.ndarray, bits: int = 16) -> None:
    """Write a [0, 1] frame as a grey PNG/PGM with 8 or 16 bits per pixel."""
    frame = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    if bits == 16:
        img = Image.fromarray(np.round(frame * 65535).astype(np.uint16))
    elif bits == 8:
        img = Image.fromarray(np.round(frame * 255).astype(np.uint8))
    else:
        raise ValueError("bits must be 8 or 16")
    img.save(path)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def _derivatives(a: np.ndarray, b: np.ndarray):
    mean = 0.5 * (a + b)
    p = np.pad(mean, 1, mode="edge")
    ix = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    iy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    it = b - a
    return ix, iy, it


def estimate_flow(a: np.ndarray, b: np.ndarray, iterations: int = DEFAULT_ITERATIONS,
                  smoothness: float = DEFAULT_SMOOTHNESS, return_residuals: bool = False):
    """Horn-Schunck flow carrying frame ``a`` onto frame ``b``.

    ``smoothness`` is the regularisation weight (it enters the update squared).
    With ``return_residuals`` the per-iteration update norm
    ``sqrt(|du|^2 + |dv|^2)`` is returned alongside the field.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"frames must be 2-D and equal in shape, got {a.shape} and {b.shape}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if smoothness <= 0:
        raise ValueError("smoothness must be > 0")

    ix, iy, it = _derivatives(a, b)
    denom = smoothness ** 2 + ix * ix + iy * iy
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    residuals = []
    for _ in range(iterations):
        u_avg = ndimage.convolve(u, _HS_KERNEL, mode="nearest")
        v_avg = ndimage.convolve(v, _HS_KERNEL, mode="nearest")
        common = (ix * u_avg + iy * v_avg + it) / denom
        u_new = u_avg - ix * common
        v_new = v_avg - iy * common
        if return_residuals:
            residuals.append(float(np.sqrt(((u_new - u) ** 2).sum() + ((v_new - v) ** 2).sum())))
        u, v = u_new, v_new
    field = FlowField(u, v)
    return (field, np.array(residuals)) if return_residuals else field


def flow_magnitude(field: FlowField) -> np.ndarray:
    """Per-pixel motion intensity ``sqrt(u^2 + v^2)``."""
    return np.hypot(field.u, field.v).astype(np.float32)


# ---------------------------------------------------------------------------
# .flo files
# ---------------------------------------------------------------------------

def write_flo(field: FlowField, path) -> None:
    h, w = field.shape
    data = np.stack([field.u, field.v], axis=-1).astype("<f4")
    Path(path).write_bytes(FLO_TAG + struct.pack("<ii", w, h) + data.tobytes())


def read_flo(path) -> FlowField:
    buf = Path(path).read_bytes()
    if len(buf) < 12:
        raise FormatError(f"{path}: truncated .flo header")
    if buf[:4] != FLO_TAG:
        raise FormatError(f"{path}: bad .flo magic {buf[:4]!r}")
    w, h = struct.unpack_from("<ii", buf, 4)
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=12).reshape(h, w, 2)
    return FlowField(data[..., 0].copy(), data[..., 1].copy())
