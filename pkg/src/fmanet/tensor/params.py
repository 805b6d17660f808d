"""Named parameter storage and the MMCF binary tensor container.

Container layout (all integers little-endian u32)::

    b"MMCF" | version
    repeated: name_len | name (utf-8) | rank | extents[rank] | f32 values (LE)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from ..errors import FormatError
from .core import Tensor

MAGIC = b"MMCF"
VERSION = 1

ROLES = ("conv-kernel", "conv-bias", "dense-weight", "dense-bias",
         "bn-scale", "bn-shift", "ln-scale", "ln-shift")


@dataclass
class Parameter:
    name: str
    tensor: Tensor
    role: str


class ParameterSet:
    """Ordered, uniquely named learnable tensors."""

    def __init__(self):
        self._entries: dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, role: str) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        if role not in ROLES:
            raise ValueError(f"unknown parameter role {role!r}")
        t = Tensor(np.ascontiguousarray(value), requires_grad=True, name=name)
        self._entries[name] = Parameter(name, t, role)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def role(self, name: str) -> str:
        return self._entries[name].role

    def tensors(self) -> list[Tensor]:
        return [p.tensor for p in self._entries.values()]

    def items(self):
        return ((n, p.tensor) for n, p in self._entries.items())

    def count(self) -> int:
        return int(sum(p.tensor.size for p in self._entries.values()))

    def zero_grad(self) -> None:
        for p in self._entries.values():
            p.tensor.zero_grad()

    def astype(self, dtype) -> None:
        """Cast every value in place (gradients are dropped)."""
        for p in self._entries.values():
            p.tensor.data = p.tensor.data.astype(dtype)
            p.tensor.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {n: p.tensor.data for n, p in self._entries.items()}

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        missing = set(self._entries) - set(arrays)
        if missing:
            raise FormatError(f"container lacks parameters: {sorted(missing)}")
        for n, p in self._entries.items():
            arr = np.asarray(arrays[n])
            if arr.shape != p.tensor.shape:
                raise FormatError(f"parameter {n!r} has shape {arr.shape}, expected {p.tensor.shape}")
            p.tensor.data = arr.astype(p.tensor.dtype).copy()
            p.tensor.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: a.copy() for n, a in self.state().items()}


def save_tensors(path, arrays: Mapping[str, np.ndarray]) -> None:
    """Write ``arrays`` as float32 entries of an MMCF container."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: not an MMCF container (bad magic)")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}

    def take(nbytes):
        nonlocal pos
        if pos + nbytes > len(buf):
            raise FormatError(f"{path}: truncated container")
        chunk = buf[pos:pos + nbytes]
        pos += nbytes
        return chunk

    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(take(4 * count), dtype="<f4").astype(np.float32)
        if name in out:
            raise FormatError(f"{path}: duplicate entry {name!r}")
        out[name] = values.reshape(shape)
    return out
