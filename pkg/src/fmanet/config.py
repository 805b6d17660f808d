"""Run configuration: flat ``key = value`` files layered under command-line flags.

Precedence is command line > config file > built-in defaults. Keys use the
long flag names with dashes or underscores, e.g. ``k-upper = 2`` or
``batch_size = 16``. ``#`` starts a comment.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping

from .data.features import FlowSettings
from .errors import FormatError
from .experiment import ExperimentConfig
from .mmcof import ModulationConfig
from .model import FmanetHyper, TrainSchedule


@dataclass
class RunConfig:
    root: str | None = None
    annotations: str | None = None
    protocol: int = 5
    out: str = "run"
    representation: str = "fmanet"
    image_size: int = 224
    augment: str = "none"
    flow_iterations: int = 200
    flow_smoothness: float = 0.1
    presmooth: float = 1.0
    mode: str = "adaptive"
    alpha: float = 0.5
    beta: float = 1.8
    k_upper: float = 2.0
    k_lower: float = 1.0
    w1: float = 2.0
    w2: float = 0.5
    theta1: float = 1.0
    theta2: float = 1.0
    theta: float = 1.0
    tau: float = 0.1
    c_mid: int = 16
    epsilon: float = 1e-6
    hidden: int = 1024
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    jobs: int = 1

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def layered(cls, file_values: Mapping[str, str] | None = None,
                cli_values: Mapping[str, object] | None = None) -> "RunConfig":
        """Defaults, then the config file, then explicitly given flags."""
        merged = asdict(cls())
        for source in (file_values or {}, cli_values or {}):
            for key, value in source.items():
                key = key.replace("-", "_")
                if key not in merged:
                    raise FormatError(f"unknown configuration key {key!r}")
                if value is not None:
                    merged[key] = _coerce(key, value)
        return cls(**merged)

    def validate(self, need_data: bool = True) -> None:
        """Check referenced paths and build every nested config once."""
        if need_data:
            for key in ("root", "annotations"):
                value = getattr(self, key)
                if value is None:
                    raise FormatError(f"{key} is required")
                if not Path(value).exists():
                    raise FileNotFoundError(f"{key}: {value} does not exist")
        if self.protocol not in (3, 5, 6, 7):
            raise ValueError(f"protocol must be 3, 5, 6 or 7, got {self.protocol}")
        self.experiment()

    def modulation(self) -> ModulationConfig:
        return ModulationConfig(self.mode, self.alpha, self.beta, self.k_upper, self.k_lower, self.w1, self.w2)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            representation=self.representation, image_size=self.image_size, augment=self.augment,
            flow=FlowSettings(self.flow_iterations, self.flow_smoothness, self.presmooth),
            modulation=self.modulation(), theta1=self.theta1, theta2=self.theta2,
            hyper=FmanetHyper(self.theta, self.tau, self.c_mid, self.epsilon), hidden=self.hidden,
            schedule=TrainSchedule(self.epochs, self.batch_size, self.lr, self.optimizer, self.seed),
            jobs=self.jobs)

    def to_text(self) -> str:
        return "".join(f"{k} = {'' if v is None else v}\n" for k, v in asdict(self).items())


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    kind = _TYPES[key]
    if isinstance(value, str):
        value = value.strip()
        if value == "" and "None" in kind:
            return None
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{key}: cannot parse {value!r} as {kind.split()[0]}") from exc
    return str(value)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise FormatError(f"{source}:{number}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path) -> dict[str, str]:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))
