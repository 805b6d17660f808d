"""Geometric augmentation of onset/apex/offset triplets."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

AUGMENT_OPTIONS = ("flip", "rot5", "rot10")
FULL_SPEC = AUGMENT_OPTIONS

Triplet = tuple[np.ndarray, np.ndarray, np.ndarray]


def flip_frame(frame: np.ndarray) -> np.ndarray:
    """Mirror left-right (lossless)."""
    return np.ascontiguousarray(frame[:, ::-1])


def rotate_frame(frame: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the centre, bilinear with replicated borders, same size."""
    out = ndimage.rotate(frame.astype(np.float32), degrees, reshape=False, order=1, mode="nearest")
    return out.astype(frame.dtype, copy=False)


def parse_spec(spec: str | Iterable[str] | None) -> tuple[str, ...]:
    """Normalize ``"flip,rot5"`` / ``["flip"]`` / ``"none"`` / ``"full"`` to option names."""
    if spec is None:
        return ()
    if isinstance(spec, str):
        spec = [p for p in spec.replace("+", ",").split(",") if p.strip()]
    names = [p.strip().lower() for p in spec]
    if names in (["none"], []):
        return ()
    if names == ["full"]:
        return FULL_SPEC
    bad = [n for n in names if n not in AUGMENT_OPTIONS]
    if bad:
        raise ValueError(f"unknown augmentation(s) {bad}; choose from {AUGMENT_OPTIONS}")
    return tuple(n for n in AUGMENT_OPTIONS if n in names)


def variant_names(spec) -> list[str]:
    names = ["orig"]
    for option in parse_spec(spec):
        if option == "flip":
            names.append("flip")
        else:
            deg = int(option[3:])
            names += [f"rot+{deg}", f"rot-{deg}"]
    return names


def apply_variant(frame: np.ndarray, name: str) -> np.ndarray:
    if name == "orig":
        return frame
    if name == "flip":
        return flip_frame(frame)
    if name.startswith("rot"):
        return rotate_frame(frame, float(name[3:]))
    raise ValueError(f"unknown variant {name!r}")


def augment(frames: Sequence[np.ndarray], spec=FULL_SPEC) -> list[tuple[str, Triplet]]:
    """The original triplet followed by one transformed copy per selected variant.

    The same transform is applied to all three frames. With the full spec this
    gives 6 variants: original, flip, and rotations by +-5 and +-10 degrees.
    """
    frames = tuple(frames)
    return [(name, tuple(apply_variant(f, name) for f in frames)) for name in variant_names(spec)]
