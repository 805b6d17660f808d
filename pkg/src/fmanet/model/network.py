"""FMANet / SCNN classifiers, training loop, prediction and checkpoints.

Model inputs are dicts of batch-first arrays:

* FMANet: ``i_on``/``i_off`` (B, 3, H, W) flow images, ``m_on``/``m_off`` (B, H, W)
  magnitude maps.
* SCNN:   ``x`` (B, 3, H, W), e.g. stacked MM-COF images.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import FormatError
from ..tensor import ParameterSet, Tensor, load_tensors, make_optimizer, save_tensors, softmax_cross_entropy
from ..tensor.ops import log_softmax
from .blocks import FmanetHyper, FusionBlock, MotionAttentionBlock
from .scnn import SCNN

log = logging.getLogger(__name__)

Inputs = Mapping[str, np.ndarray]


class FMANet:
    kind = "fmanet"

    def __init__(self, num_classes: int = 5, input_size: int = 224, hyper: FmanetHyper | None = None,
                 hidden: int = 1024, seed: int = 0):
        self.hyper = hyper or FmanetHyper()
        self.num_classes = num_classes
        self.input_size = input_size
        self.hidden = hidden
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.ffb = FusionBlock(self.params, rng, self.hyper)
        self.smab = MotionAttentionBlock(self.params, rng, self.hyper)
        self.scnn = SCNN(self.params, rng, in_channels=self.hyper.c_mid, num_classes=num_classes,
                         input_size=input_size, hidden=hidden)
        log.debug("FMANet with %d parameters", self.params.count())

    @property
    def dtype(self):
        return self.params["scnn.output.bias"].dtype

    def forward(self, inputs: Inputs, train: bool = False, trace: dict | None = None) -> Tensor:
        i_on = Tensor(np.asarray(inputs["i_on"], dtype=self.dtype))
        i_off = Tensor(np.asarray(inputs["i_off"], dtype=self.dtype))
        fused = self.ffb(i_on, i_off, inputs["m_on"], inputs["m_off"], train=train, trace=trace)
        attended = self.smab(fused, inputs["m_on"], inputs["m_off"], trace=trace)
        shapes = [] if trace is not None else None
        logits = self.scnn(attended, trace=shapes)
        if trace is not None:
            trace["scnn_shapes"] = shapes
        return logits

    def config(self) -> dict:
        return {"kind": self.kind, "num_classes": self.num_classes, "input_size": self.input_size,
                "hidden": self.hidden, "seed": self.seed, "hyper": asdict(self.hyper)}

    def buffers(self) -> dict[str, np.ndarray]:
        st = self.ffb.bn_state
        return {"buffer:ffb.bn.running_mean": st.running_mean, "buffer:ffb.bn.running_var": st.running_var}

    def load_buffers(self, arrays: Mapping[str, np.ndarray]) -> None:
        st = self.ffb.bn_state
        st.running_mean = np.asarray(arrays["buffer:ffb.bn.running_mean"], np.float32).copy()
        st.running_var = np.asarray(arrays["buffer:ffb.bn.running_var"], np.float32).copy()


class SCNNClassifier:
    """SCNN on a single 3-channel image per sample (MM-COF or single-phase flow)."""

    kind = "scnn"

    def __init__(self, num_classes: int = 5, input_size: int = 224, in_channels: int = 3,
                 hidden: int = 1024, seed: int = 0):
        self.num_classes = num_classes
        self.input_size = input_size
        self.in_channels = in_channels
        self.hidden = hidden
        self.seed = seed
        self.params = ParameterSet()
        self.scnn = SCNN(self.params, np.random.default_rng(seed), in_channels, num_classes,
                         input_size, hidden)

    @property
    def dtype(self):
        return self.params["scnn.output.bias"].dtype

    def forward(self, inputs: Inputs, train: bool = False, trace: dict | None = None) -> Tensor:
        shapes = [] if trace is not None else None
        logits = self.scnn(Tensor(np.asarray(inputs["x"], dtype=self.dtype)), trace=shapes)
        if trace is not None:
            trace["scnn_shapes"] = shapes
        return logits

    def config(self) -> dict:
        return {"kind": self.kind, "num_classes": self.num_classes, "input_size": self.input_size,
                "in_channels": self.in_channels, "hidden": self.hidden, "seed": self.seed}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def load_buffers(self, arrays) -> None:
        pass


def build_model(config: Mapping):
    config = dict(config)
    kind = config.pop("kind")
    if kind == "fmanet":
        hyper = FmanetHyper(**config.pop("hyper", {}))
        return FMANet(hyper=hyper, **config)
    if kind == "scnn":
        return SCNNClassifier(**config)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainSchedule:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    accuracies: list[float] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def take(inputs: Inputs, idx) -> dict[str, np.ndarray]:
    return {k: np.asarray(v)[idx] for k, v in inputs.items()}


def _num_samples(inputs: Inputs) -> int:
    sizes = {len(v) for v in inputs.values()}
    if not sizes:
        raise ValueError("no input arrays given")
    if len(sizes) != 1:
        raise ValueError(f"input arrays disagree on sample count: {sorted(sizes)}")
    return sizes.pop()


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing singleton joins the previous batch."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def train(model, inputs: Inputs, labels, schedule: TrainSchedule | None = None,
          checkpoint_dir=None) -> TrainResult:
    """Mini-batch training with softmax cross-entropy.

    With ``checkpoint_dir`` a checkpoint ``epoch_NNN.mmcf`` is written after
    every epoch.
    """
    schedule = schedule or TrainSchedule()
    labels = np.asarray(labels, dtype=np.int64)
    n = _num_samples(inputs)
    if n == 0:
        raise ValueError("cannot train on an empty fold")
    if len(labels) != n:
        raise ValueError("labels and inputs differ in length")
    rng = np.random.default_rng(schedule.seed)
    opt = make_optimizer(schedule.optimizer, model.params, schedule.lr)
    result = TrainResult()
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    for epoch in range(schedule.epochs):
        total, correct = 0.0, 0
        for idx in minibatches(n, schedule.batch_size, rng):
            logits = model.forward(take(inputs, idx), train=True)
            loss = softmax_cross_entropy(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == labels[idx]).sum())
        result.losses.append(total / n)
        result.accuracies.append(correct / n)
        log.info("epoch %d loss %.4f acc %.3f", epoch + 1, result.losses[-1], result.accuracies[-1])
        if checkpoint_dir is not None:
            path = checkpoint_dir / f"epoch_{epoch + 1:03d}.mmcf"
            save_checkpoint(model, path, extra={"epoch": epoch + 1, "loss": result.losses[-1]})
            result.checkpoints.append(path)
    return result


def predict(model, inputs: Inputs, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Class indices and softmax probabilities in inference mode."""
    n = _num_samples(inputs)
    probs = []
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(n, start + batch_size))
        logits = model.forward(take(inputs, idx), train=False).data.astype(np.float64)
        probs.append(np.exp(log_softmax(logits)))
    probs = np.concatenate(probs) if probs else np.zeros((0, model.num_classes))
    return probs.argmax(axis=1), probs


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def header_path(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(model, path, protocol=None, extra: Mapping | None = None) -> None:
    """Write parameters and buffers to ``path`` and a JSON header beside it."""
    arrays = dict(model.params.state())
    arrays.update(model.buffers())
    save_tensors(path, arrays)
    header = {"model": model.config(), "protocol": protocol, "parameter_count": model.params.count()}
    if extra:
        header.update(extra)
    header_path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    try:
        header = json.loads(header_path(path).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: checkpoint header {header_path(path)} missing") from exc
    model = build_model(header["model"])
    arrays = load_tensors(path)
    model.params.load_state(arrays)
    model.load_buffers(arrays)
    return model, header
