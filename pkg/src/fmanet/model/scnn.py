"""Shallow CNN backbone: four 3x3 convolutions, three 2x2 max-pools, two FC layers."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..tensor import ParameterSet, Tensor, conv2d, conv_output_size, dense, flatten, maxpool2d, relu
from .blocks import add_conv, he_uniform

# (layer, output channels) in forward order; the spatial size follows from the
# conv/pool arithmetic (3x3 stride 1 pad 1 keeps size, 2x2 stride 2 halves it).
LAYOUT = (("conv1", 32), ("conv2", 32), ("pool1", None), ("conv3", 32),
          ("pool2", None), ("conv4", 64), ("pool3", None))

# Output-size column of the published configuration for a 224 x 224 input.
REFERENCE_TRACE = (
    ("conv1", (32, 224, 224)), ("conv2", (32, 224, 224)), ("pool1", (32, 112, 112)),
    ("conv3", (32, 112, 112)), ("pool2", (32, 56, 56)), ("conv4", (64, 56, 56)),
    ("pool3", (64, 28, 28)), ("fc1", (1024,)), ("fc2", (1024,)), ("output", (5,)),
)


def expected_trace(input_size: int, num_classes: int, hidden: int = 1024) -> list:
    """Reference layer shapes (224 input) rescaled to an ``input_size`` square input."""
    s = input_size
    return [("conv1", (32, s, s)), ("conv2", (32, s, s)), ("pool1", (32, s // 2, s // 2)),
            ("conv3", (32, s // 2, s // 2)), ("pool2", (32, s // 4, s // 4)),
            ("conv4", (64, s // 4, s // 4)), ("pool3", (64, s // 8, s // 8)),
            ("fc1", (hidden,)), ("fc2", (hidden,)), ("output", (num_classes,))]


class SCNN:
    def __init__(self, params: ParameterSet, rng, in_channels: int = 3, num_classes: int = 5,
                 input_size: int = 224, hidden: int = 1024, prefix: str = "scnn"):
        if input_size % 8:
            raise DimensionError(f"input size {input_size} must be divisible by 8")
        self.params = params
        self.prefix = prefix
        self.in_channels = in_channels
        self.num_classes = num_classes
        self.input_size = input_size
        self.hidden = hidden

        channels, size = in_channels, input_size
        trace = []
        for name, out_c in LAYOUT:
            if out_c is None:
                size = conv_output_size(size, 2, 2, 0)
            else:
                add_conv(params, rng, f"{prefix}.{name}", out_c, channels, 3)
                channels = out_c
                size = conv_output_size(size, 3, 1, 1)
            trace.append((name, (channels, size, size)))
        self.flat_size = channels * size * size
        width = self.flat_size
        for name, out in (("fc1", hidden), ("fc2", hidden), ("output", num_classes)):
            params.add(f"{prefix}.{name}.weight", he_uniform(rng, (width, out), width), "dense-weight")
            params.add(f"{prefix}.{name}.bias", np.zeros(out, np.float32), "dense-bias")
            trace.append((name, (out,)))
            width = out
        self.shape_trace = trace
        if trace != expected_trace(input_size, num_classes, hidden):
            raise DimensionError(f"SCNN shape trace deviates from the reference layout: {trace}")

    def __call__(self, x: Tensor, trace: list | None = None) -> Tensor:
        if x.ndim != 4 or x.shape[1:] != (self.in_channels, self.input_size, self.input_size):
            raise DimensionError(
                f"SCNN expects (N, {self.in_channels}, {self.input_size}, {self.input_size}), got {x.shape}")
        p, n = self.params, self.prefix
        for name, out_c in LAYOUT:
            if out_c is None:
                x = maxpool2d(x, 2, 2)
            else:
                x = relu(conv2d(x, p[f"{n}.{name}.weight"], p[f"{n}.{name}.bias"], padding=1))
            if trace is not None:
                trace.append((name, x.shape[1:]))
        x = flatten(x)
        for name in ("fc1", "fc2", "output"):
            x = dense(x, p[f"{n}.{name}.weight"], p[f"{n}.{name}.bias"])
            if name != "output":
                x = relu(x)
            if trace is not None:
                trace.append((name, x.shape[1:]))
        return x
