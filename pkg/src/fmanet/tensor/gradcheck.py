"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import NumericalError
from .core import Tensor, record_kinks, replay_kinks
from .params import ParameterSet


@dataclass
class GradReport:
    errors: dict[str, float]
    tolerance: float
    probes: dict[str, int] = field(default_factory=dict)
    skipped_kinks: int = 0

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            out.append(f"{name:<32s} rel_err={err:.3e} probes={self.probes.get(name, 0)} {flag}")
        return out


def _signature(log) -> tuple:
    return tuple(a.tobytes() for a in log)


def grad_check(loss_fn: Callable[[], Tensor],
               tensors: ParameterSet | Mapping[str, Tensor],
               tolerance: float = 1e-3, h: float = 1e-3, n_probes: int = 10,
               seed: int = 0, dtype=np.float64, floor: float = 1e-8,
               freeze_kinks: bool = True) -> GradReport:
    """Compare back-propagated gradients of ``loss_fn()`` with central differences.

    Every tensor in ``tensors`` is cast to ``dtype`` for the duration of the
    check and restored afterwards. Up to ``n_probes`` random entries per tensor
    are probed. Kinks are kept out of the comparison in one of two ways:

    * ``freeze_kinks=True``: the +/-h evaluations replay the ReLU masks and
      pooling argmax of the base point, so both sides of the difference lie on
      the linear piece the analytic gradient was taken on.
    * ``freeze_kinks=False``: a probe whose +/-h evaluations change any such
      decision is discarded and another entry is drawn.

    The per-tensor error is ``max |a - n| / max(|a|, |n|, floor)``.
    """
    named = dict(tensors.items()) if isinstance(tensors, ParameterSet) else dict(tensors)
    originals = {n: (t.data, t.grad) for n, t in named.items()}
    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    probes: dict[str, int] = {}
    skipped = 0
    try:
        for t in named.values():
            t.data = t.data.astype(dtype)
            t.grad = np.zeros_like(t.data)
        with record_kinks() as base_log:
            loss = loss_fn()
        base = _signature(base_log)
        loss.backward()
        for name, t in named.items():
            if not np.isfinite(t.grad).all():
                raise NumericalError(f"non-finite analytic gradient for {name!r}")
        analytic = {n: t.grad.copy() for n, t in named.items()}

        for name, t in named.items():
            flat = t.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            candidates = rng.permutation(flat.size)
            worst, accepted = 0.0, 0
            for idx in candidates:
                if accepted >= n_probes:
                    break
                x0 = flat[idx]
                values = []
                crossed = False
                for delta in (h, -h):
                    flat[idx] = x0 + delta
                    if freeze_kinks:
                        with replay_kinks(base_log):
                            values.append(float(loss_fn().data))
                    else:
                        with record_kinks() as log:
                            values.append(float(loss_fn().data))
                        crossed |= _signature(log) != base
                flat[idx] = x0
                if crossed:
                    skipped += 1
                    continue
                numeric = (values[0] - values[1]) / (2 * h)
                a = float(a_flat[idx])
                denom = max(abs(a), abs(numeric), floor)
                worst = max(worst, abs(a - numeric) / denom)
                accepted += 1
            errors[name] = worst
            probes[name] = accepted
    finally:
        for n, t in named.items():
            t.data, t.grad = originals[n]
    return GradReport(errors, tolerance, probes, skipped)
