"""Synthetic micro-motion clips with known generating patterns.

Each class is a localized displacement: a Gaussian bump of motion at a fixed
facial region, pointing in a class-specific direction. A clip is a still
texture (one per subject) that the key motion deforms from onset to apex and
releases again at offset.

Asymmetry ``a`` adds a second, persistent motion borrowed from another class:
it appears between onset and apex together with the key motion but does not
return at offset. ``a`` is its share of the apex displacement energy, so at
``a = 0.5`` the two motions are equally strong and the onset-apex phase alone
cannot tell which one is the label. The apex-offset phase only reverses the
key motion.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..flow import save_frame
from .index import VOCABULARY, DatasetIndex, Sample, write_index

# Region centres as fractions of (row, col); class k uses REGIONS[k].
REGIONS = ((0.25, 0.25), (0.25, 0.75), (0.5, 0.5), (0.75, 0.3), (0.75, 0.7),
           (0.25, 0.5), (0.5, 0.2), (0.5, 0.8), (0.75, 0.5))
FRAME_NUMBERS = (0, 1, 2)


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 5
    samples_per_class: int = 20
    image_size: int = 32
    noise_level: float = 0.0
    asymmetry_level: float = 0.0
    seed: int = 0
    subjects: int = 8
    amplitude: float = 1.0  # peak key displacement in pixels
    blob_sigma: float = 0.1  # motion blob radius, fraction of image size
    texture_sigma: float = 1.5  # texture correlation length in pixels
    contrast: float = 0.25  # texture intensity standard deviation

    def __post_init__(self):
        if not 2 <= self.classes <= len(VOCABULARY):
            raise ValueError(f"classes must be in [2, {len(VOCABULARY)}], got {self.classes}")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if not 0 <= self.asymmetry_level < 1:
            raise ValueError("asymmetry_level must be in [0, 1)")
        if self.samples_per_class < 1 or self.subjects < 1 or self.image_size < 8:
            raise ValueError("samples_per_class, subjects >= 1 and image_size >= 8 required")


@dataclass
class SynthDataset:
    config: SynthConfig
    index: DatasetIndex
    frames: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]
    truth: dict[str, dict] = field(default_factory=dict)

    def triplet(self, sample: Sample):
        return self.frames[sample.sample_id]


def class_direction(k: int, classes: int) -> float:
    return 2 * np.pi * k / classes


def displacement(size: int, centre, angle: float, amplitude: float, sigma: float):
    """(dy, dx) field of a Gaussian motion bump."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = centre
    bump = amplitude * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return bump * np.sin(angle), bump * np.cos(angle)


def warp(image: np.ndarray, dy: np.ndarray, dx: np.ndarray) -> np.ndarray:
    """Backward warp so that content moves by (dx, dy)."""
    size_y, size_x = image.shape
    yy, xx = np.mgrid[0:size_y, 0:size_x].astype(np.float64)
    return ndimage.map_coordinates(image, [yy - dy, xx - dx], order=3, mode="nearest")


def _texture(rng: np.random.Generator, size: int, sigma: float, contrast: float) -> np.ndarray:
    t = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    t = (t - t.mean()) / (t.std() + 1e-12)
    return np.clip(0.5 + contrast * t, 0.0, 1.0)


def synth_generate(config: SynthConfig) -> SynthDataset:
    """Generate an in-memory dataset; identical configs give identical bytes."""
    rng = np.random.default_rng(config.seed)
    size, k_classes = config.image_size, config.classes
    sigma = config.blob_sigma * size
    subjects = [f"s{j + 1:02d}" for j in range(config.subjects)]
    textures = {s: _texture(rng, size, config.texture_sigma, config.contrast) for s in subjects}
    offsets = {s: rng.uniform(-1, 1, size=2) for s in subjects}
    ratio = np.sqrt(config.asymmetry_level / (1 - config.asymmetry_level))

    samples, frames, truth = [], {}, {}
    for k in range(k_classes):
        name = VOCABULARY[k]
        for i in range(config.samples_per_class):
            subject = subjects[(i + k) % len(subjects)]
            jitter = offsets[subject]
            centre = np.array(REGIONS[k]) * size + jitter
            angle = class_direction(k, k_classes) + np.deg2rad(rng.uniform(-15, 15))
            amp = config.amplitude * rng.uniform(0.8, 1.2)
            dy, dx = displacement(size, centre, angle, amp, sigma)
            meta = {"class": k, "centre": centre.tolist(), "angle": float(angle), "amplitude": float(amp)}
            base = textures[subject]
            if ratio > 0:
                j = int(rng.choice([c for c in range(k_classes) if c != k]))
                d_centre = np.array(REGIONS[j]) * size + jitter
                d_angle = class_direction(j, k_classes) + np.deg2rad(rng.uniform(-15, 15))
                d_amp = config.amplitude * ratio * rng.uniform(0.8, 1.2)
                ey, ex = displacement(size, d_centre, d_angle, d_amp, sigma)
                meta["distractor"] = {"class": j, "centre": d_centre.tolist(),
                                      "angle": float(d_angle), "amplitude": float(d_amp)}
            else:
                ey = ex = np.zeros_like(dy)
            onset = base
            apex = warp(base, dy + ey, dx + ex)
            offset = warp(base, ey, ex) if ratio > 0 else base.copy()
            triplet = []
            for img in (onset, apex, offset):
                if config.noise_level > 0:
                    img = img + rng.normal(0.0, config.noise_level, img.shape)
                triplet.append(np.clip(img, 0.0, 1.0).astype(np.float32))
            sample = Sample(subject, f"{name}_{i:03d}", *FRAME_NUMBERS, raw_label=name)
            samples.append(sample)
            frames[sample.sample_id] = tuple(triplet)
            truth[sample.sample_id] = meta
    index = DatasetIndex(samples)
    return SynthDataset(config, index, frames, truth)


def write_dataset(dataset: SynthDataset, out_dir) -> Path:
    """Write frames as 16-bit PNG plus ``annotations.csv`` in the standard layout.

    Returns the annotation path. ``truth.csv`` records each sample's generating
    pattern and ``synth.cfg`` the configuration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in dataset.index.samples:
        clip_dir = out_dir / s.subject / s.clip
        clip_dir.mkdir(parents=True, exist_ok=True)
        for number, frame in zip(FRAME_NUMBERS, dataset.frames[s.sample_id]):
            save_frame(clip_dir / f"img{number}.png", frame, bits=16)
    annotations = out_dir / "annotations.csv"
    write_index(dataset.index, annotations)
    with open(out_dir / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "clip", "class", "angle", "amplitude", "distractor_class"])
        for s in dataset.index.samples:
            t = dataset.truth[s.sample_id]
            w.writerow([s.subject, s.clip, t["class"], f"{t['angle']:.6f}", f"{t['amplitude']:.6f}",
                        t.get("distractor", {}).get("class", "")])
    cfg_lines = [f"{k} = {v}" for k, v in asdict(dataset.config).items()]
    (out_dir / "synth.cfg").write_text("\n".join(cfg_lines) + "\n")
    return annotations
