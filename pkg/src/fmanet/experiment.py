"""Leave-one-subject-out training and evaluation over a dataset index."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data.augment import augment, parse_spec, variant_names
from .data.features import FlowSettings, REPRESENTATIONS, phase_flows, sample_input, stack_inputs
from .data.index import DatasetIndex, Fold, Sample, loso_splits
from .errors import ProtocolError
from .eval.metrics import FoldPredictions, LosoReport, aggregate_loso
from .flow import load_frame
from .mmcof import ModulationConfig
from .model import FMANet, FmanetHyper, SCNNClassifier, TrainSchedule, predict, save_checkpoint, train

log = logging.getLogger(__name__)

FrameSource = Callable[[Sample], Sequence[np.ndarray]]


def disk_frames(sample: Sample):
    if sample.frames is None:
        raise ProtocolError(f"{sample.sample_id}: frames were not resolved at load time")
    return tuple(load_frame(p) for p in sample.frames)


@dataclass
class ExperimentConfig:
    representation: str = "fmanet"
    image_size: int = 224
    augment: tuple[str, ...] = ()
    flow: FlowSettings = field(default_factory=FlowSettings)
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    theta1: float = 1.0
    theta2: float = 1.0
    hyper: FmanetHyper = field(default_factory=FmanetHyper)
    hidden: int = 1024
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    jobs: int = 1

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        self.augment = parse_spec(self.augment)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["augment"] = list(self.augment)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        return cls(representation=d["representation"], image_size=d["image_size"],
                   augment=tuple(d.get("augment", ())), flow=FlowSettings(**d["flow"]),
                   modulation=ModulationConfig(**d["modulation"]), theta1=d["theta1"], theta2=d["theta2"],
                   hyper=FmanetHyper(**d["hyper"]), hidden=d["hidden"],
                   schedule=TrainSchedule(**d["schedule"]), jobs=d.get("jobs", 1))


def build_classifier(config: ExperimentConfig, num_classes: int, seed: int):
    if config.representation == "fmanet":
        return FMANet(num_classes, config.image_size, config.hyper, config.hidden, seed)
    return SCNNClassifier(num_classes, config.image_size, 3, config.hidden, seed)


def compute_features(samples: Sequence[Sample], source: FrameSource, config: ExperimentConfig,
                     variants: Sequence[str] = ("orig",)) -> dict[tuple[str, str], dict]:
    """Model inputs keyed by ``(sample_id, variant)``."""
    flow = FlowSettings(config.flow.iterations, config.flow.smoothness, config.flow.presmooth,
                        config.image_size)
    out = {}
    for s in samples:
        frames = source(s)
        spec = config.augment if set(variants) - {"orig"} else ()
        for name, triplet in augment(frames, spec):
            if name not in variants:
                continue
            on, off = phase_flows(triplet, flow)
            out[(s.sample_id, name)] = sample_input(on, off, config.representation, config.modulation,
                                                    config.theta1, config.theta2)
    return out


def check_no_leak(fold: Fold, train_keys: Sequence[tuple[str, str]], test_keys: Sequence[tuple[str, str]]):
    """Augmented copies belong to train only; no test sample appears in train in any form."""
    test_ids = {sid for sid, _ in test_keys}
    if any(v != "orig" for _, v in test_keys):
        raise ProtocolError(f"fold {fold.subject}: augmented variants in the test set")
    if test_ids & {sid for sid, _ in train_keys}:
        raise ProtocolError(f"fold {fold.subject}: test samples leak into training")
    train_subjects = {s.subject for s in fold.train}
    if fold.subject in train_subjects:
        raise ProtocolError(f"fold {fold.subject}: held-out subject in training")


def fold_arrays(fold: Fold, features: Mapping, variants: Sequence[str]):
    train_keys = [(s.sample_id, v) for s in fold.train for v in variants]
    test_keys = [(s.sample_id, "orig") for s in fold.test]
    check_no_leak(fold, train_keys, test_keys)
    labels = {s.sample_id: s.label for s in fold.train + fold.test}
    x_train = stack_inputs([features[k] for k in train_keys])
    y_train = np.array([labels[sid] for sid, _ in train_keys], dtype=np.int64)
    x_test = stack_inputs([features[k] for k in test_keys])
    y_test = np.array([labels[sid] for sid, _ in test_keys], dtype=np.int64)
    return x_train, y_train, x_test, y_test


def run_fold(fold: Fold, features: Mapping, config: ExperimentConfig, num_classes: int,
             fold_index: int, out_dir=None, protocol: int | None = None) -> FoldPredictions:
    variants = variant_names(config.augment)
    x_train, y_train, x_test, y_test = fold_arrays(fold, features, variants)
    model = build_classifier(config, num_classes, config.schedule.seed + fold_index)
    schedule = TrainSchedule(**{**asdict(config.schedule), "seed": config.schedule.seed + fold_index})
    train(model, x_train, y_train, schedule)
    preds, _ = predict(model, x_test)
    if out_dir is not None:
        save_checkpoint(model, Path(out_dir) / "checkpoints" / f"{fold.subject}.mmcf", protocol=protocol,
                        extra={"fold_subject": fold.subject, "n_train": int(len(y_train)),
                               "experiment": config.as_dict()})
    log.info("fold %s: %d/%d correct", fold.subject, int((preds == y_test).sum()), len(y_test))
    return FoldPredictions(fold.subject, [s.sample_id for s in fold.test], y_test, preds.astype(np.int64))


def _run_fold_job(args):
    return run_fold(*args)


def run_loso(index: DatasetIndex, source: FrameSource = disk_frames, config: ExperimentConfig | None = None,
             out_dir=None) -> tuple[LosoReport, list[FoldPredictions]]:
    """Train one model per held-out subject and pool the test predictions.

    Flows are computed once per (sample, variant) and shared by all folds.
    With ``config.jobs > 1`` folds run in worker processes; results are merged
    in subject order, so the report does not depend on completion order.
    """
    config = config or ExperimentConfig()
    index.labels()  # must be mapped
    num_classes = len(index.class_names)
    folds = loso_splits(index)
    variants = variant_names(config.augment)
    features = compute_features(index.samples, source, config, variants)
    if out_dir is not None:
        Path(out_dir, "checkpoints").mkdir(parents=True, exist_ok=True)
    jobs = [(fold, features, config, num_classes, i, out_dir, index.protocol) for i, fold in enumerate(folds)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_fold_job, jobs))
    else:
        results = [_run_fold_job(j) for j in jobs]
    results.sort(key=lambda r: r.subject)
    report = aggregate_loso(results, num_classes)
    return report, results


def write_predictions(results: Sequence[FoldPredictions], path, class_names: Sequence[str] | None = None):
    """Per-sample predictions as CSV: fold_subject, sample_id, label, pred."""
    lines = ["fold_subject,sample_id,label,pred"]
    for r in sorted(results, key=lambda r: r.subject):
        for sid, y, p in zip(r.sample_ids, r.labels, r.preds):
            lines.append(f"{r.subject},{sid},{int(y)},{int(p)}")
    Path(path).write_text("\n".join(lines) + "\n")
    if class_names is not None:
        Path(str(path) + ".classes.json").write_text(json.dumps(list(class_names)) + "\n")


def read_predictions(path) -> list[FoldPredictions]:
    rows: dict[str, list] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["fold_subject", "sample_id", "label", "pred"]:
            raise ProtocolError(f"{path}: unexpected predictions header {header}")
        for line in fh:
            if not line.strip():
                continue
            subject, sid, y, p = line.strip().split(",")
            rows.setdefault(subject, []).append((sid, int(y), int(p)))
    return [FoldPredictions(s, [r[0] for r in v], np.array([r[1] for r in v], np.int64),
                            np.array([r[2] for r in v], np.int64)) for s, v in sorted(rows.items())]
