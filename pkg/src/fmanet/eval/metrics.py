"""Confusion matrices, accuracy / UF1 / UAR, and LOSO pooling."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ProtocolError

CSV_HEADER = ("fold_subject", "n_test", "acc", "uf1", "uar")
POOLED_ID = "ALL"


def confusion(preds, labels, num_classes: int | None = None) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"preds ({preds.size}) and labels ({labels.size}) differ in length")
    if num_classes is None:
        num_classes = int(max(preds.max(initial=-1), labels.max(initial=-1))) + 1
    for name, arr in (("preds", preds), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ValueError(f"{name} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


@dataclass
class MetricsReport:
    accuracy: float
    uf1: float
    uar: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray
    flagged: list[int] = field(default_factory=list)  # classes with a zero denominator

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "uf1": self.uf1, "uar": self.uar, "n": self.n,
                "precision": self.precision.tolist(), "recall": self.recall.tolist(),
                "f1": self.f1.tolist(), "support": self.support.tolist(),
                "confusion": self.confusion.tolist(), "flagged": list(self.flagged)}


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(cm) -> MetricsReport:
    """Accuracy, unweighted F1 and unweighted average recall of a confusion matrix.

    Precision, recall or F1 with a zero denominator count as 0 and the class is
    listed in ``flagged``.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError(f"confusion matrix must be square and non-empty, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix has negative counts")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix holds no samples")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_ratio(tp, predicted)
    recall = _safe_ratio(tp, support)
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    flagged = [int(i) for i in np.flatnonzero((support == 0) | (predicted == 0))]
    return MetricsReport(accuracy=float(tp.sum() / total), uf1=float(f1.mean()), uar=float(recall.mean()),
                         precision=precision, recall=recall, f1=f1, support=support,
                         confusion=cm, flagged=flagged)


@dataclass
class FoldPredictions:
    subject: str
    sample_ids: list[str]
    labels: np.ndarray
    preds: np.ndarray


@dataclass
class LosoReport:
    pooled: MetricsReport
    folds: dict[str, MetricsReport]
    fold_sizes: dict[str, int]
    macro: dict[str, float]


def aggregate_loso(folds: Sequence[FoldPredictions], num_classes: int) -> LosoReport:
    """Pool predictions of all folds into one confusion matrix.

    Per-fold reports and fold-averaged (macro) scalars are kept alongside.
    Folds are reported in subject-id order, whatever order they arrive in.
    """
    if not folds:
        raise ProtocolError("no folds to aggregate")
    seen: set[str] = set()
    subjects: set[str] = set()
    for f in folds:
        if f.subject in subjects:
            raise ProtocolError(f"subject {f.subject!r} appears in more than one fold")
        subjects.add(f.subject)
        overlap = seen & set(f.sample_ids)
        if overlap:
            raise ProtocolError(f"samples tested in more than one fold: {sorted(overlap)[:5]}")
        seen.update(f.sample_ids)
    ordered = sorted(folds, key=lambda f: f.subject)
    pooled_cm = sum((confusion(f.preds, f.labels, num_classes) for f in ordered),
                    np.zeros((num_classes, num_classes), dtype=np.int64))
    per_fold = {f.subject: compute_metrics(confusion(f.preds, f.labels, num_classes))
                for f in ordered if len(f.labels)}
    macro = {key: float(np.mean([getattr(r, key) for r in per_fold.values()]))
             for key in ("accuracy", "uf1", "uar")}
    return LosoReport(compute_metrics(pooled_cm), per_fold,
                      {f.subject: len(f.labels) for f in ordered}, macro)


def _row(subject: str, n: int, r: MetricsReport) -> list[str]:
    return [subject, str(n), f"{r.accuracy:.6f}", f"{r.uf1:.6f}", f"{r.uar:.6f}"]


def write_metrics_csv(report: LosoReport, path) -> None:
    """One row per fold (subject order) then the pooled ``ALL`` row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for subject, r in report.folds.items():
            w.writerow(_row(subject, report.fold_sizes[subject], r))
        w.writerow(_row(POOLED_ID, report.pooled.n, report.pooled))


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summary(report: LosoReport, class_names: Sequence[str] | None = None) -> dict:
    return {"pooled": report.pooled.as_dict(), "macro": report.macro,
            "folds": {s: {"n_test": report.fold_sizes[s], "accuracy": r.accuracy, "uf1": r.uf1,
                          "uar": r.uar} for s, r in report.folds.items()},
            "class_names": list(class_names) if class_names is not None else None}


def write_summary(report: LosoReport, path, class_names=None) -> None:
    Path(path).write_text(json.dumps(summary(report, class_names), indent=2, sort_keys=True) + "\n")
