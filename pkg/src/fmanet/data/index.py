"""Annotation CSV ingestion, label protocols and leave-one-subject-out folds."""
from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from ..errors import IngestionError, MappingError, ProtocolError

COLUMNS = ("subject", "clip", "onset", "apex", "offset", "label")
FRAME_SUFFIXES = (".png", ".pgm", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")

# Known raw labels, in the order used for class indices.
VOCABULARY = ("happiness", "disgust", "surprise", "repression", "others",
              "fear", "sadness", "anger", "contempt")
ALIASES = {"happy": "happiness", "other": "others", "sad": "sadness", "surprised": "surprise",
           "disgusted": "disgust", "angry": "anger", "repressed": "repression", "fearful": "fear"}

THREE_CLASS = {"happiness": "positive", "disgust": "negative", "repression": "negative",
               "sadness": "negative", "fear": "negative", "surprise": "surprise"}
THREE_CLASS_NAMES = ("positive", "negative", "surprise")
MIN_CLASS_SIZE = 10
PROTOCOLS = (3, 5, 6, 7)


@dataclass(frozen=True)
class Sample:
    subject: str
    clip: str
    onset: int | str
    apex: int | str
    offset: int | str
    raw_label: str
    label: int | None = None
    frames: tuple[Path, Path, Path] | None = None

    @property
    def sample_id(self) -> str:
        return f"{self.subject}/{self.clip}"


@dataclass
class DatasetIndex:
    samples: list[Sample]
    protocol: int | None = None
    class_names: list[str] = field(default_factory=list)
    root: Path | None = None
    excluded: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def subjects(self) -> list[str]:
        return sorted({s.subject for s in self.samples})

    def labels(self) -> list[int]:
        if any(s.label is None for s in self.samples):
            raise MappingError("index has unmapped samples; call map_labels first")
        return [s.label for s in self.samples]

    def counts(self) -> Counter:
        return Counter(s.raw_label for s in self.samples)


def normalize_label(raw: str) -> str:
    key = raw.strip().lower()
    return ALIASES.get(key, key)


def _parse_ref(text: str) -> int | str:
    text = text.strip()
    return int(text) if re.fullmatch(r"[+-]?\d+", text) else text


def _ref_number(ref: int | str) -> int | None:
    if isinstance(ref, int):
        return ref
    m = re.search(r"(\d+)$", Path(ref).stem)
    return int(m.group(1)) if m else None


class _FrameResolver:
    """Maps (subject, clip, ref) to a frame file, caching directory listings."""

    def __init__(self, root: Path):
        self.root = root
        self._listings: dict[Path, dict[int, Path]] = {}

    def _listing(self, folder: Path) -> dict[int, Path]:
        if folder not in self._listings:
            table: dict[int, Path] = {}
            if folder.is_dir():
                for p in sorted(folder.iterdir()):
                    if p.suffix.lower() not in FRAME_SUFFIXES:
                        continue
                    m = re.search(r"(\d+)$", p.stem)
                    if m:
                        table.setdefault(int(m.group(1)), p)
            self._listings[folder] = table
        return self._listings[folder]

    def __call__(self, subject: str, clip: str, ref: int | str) -> Path | None:
        if isinstance(ref, int):
            return self._listing(self.root / subject / clip).get(ref)
        for candidate in (self.root / ref, self.root / subject / clip / ref):
            if candidate.is_file():
                return candidate
        return None


def load_index(root, annotation_path, check_frames: bool = True) -> DatasetIndex:
    """Parse an annotation CSV into a :class:`DatasetIndex`.

    ``onset``/``apex``/``offset`` are either integer frame numbers, resolved to
    ``root/subject/clip/<name><number>.<ext>``, or paths relative to ``root``
    (or to the clip folder). All defective rows are collected and reported
    together in one :class:`IngestionError`.
    """
    root = Path(root)
    annotation_path = Path(annotation_path)
    resolve = _FrameResolver(root)
    problems: list[str] = []
    samples: list[Sample] = []
    with open(annotation_path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = [c.strip().lower() for c in (reader.fieldnames or [])]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise IngestionError(f"{annotation_path}: missing columns {missing}",
                                 [f"line 1: missing columns {', '.join(missing)}"])
        reader.fieldnames = header
        for row in reader:
            line = reader.line_num
            values = {c: (row.get(c) or "").strip() for c in COLUMNS}
            empty = [c for c in COLUMNS if not values[c]]
            if empty:
                problems.append(f"line {line}: empty field(s) {', '.join(empty)}")
                continue
            refs = [_parse_ref(values[c]) for c in ("onset", "apex", "offset")]
            nums = [_ref_number(r) for r in refs]
            if None not in nums and not nums[0] <= nums[1] <= nums[2]:
                problems.append(f"line {line}: frame order violated "
                                f"(onset={nums[0]}, apex={nums[1]}, offset={nums[2]})")
                continue
            frames = None
            if check_frames:
                found = [resolve(values["subject"], values["clip"], r) for r in refs]
                absent = [f"{c}={r}" for c, r, p in zip(("onset", "apex", "offset"), refs, found)
                          if p is None]
                if absent:
                    problems.append(f"line {line}: missing frame(s) {', '.join(absent)}")
                    continue
                frames = tuple(found)
            samples.append(Sample(values["subject"], values["clip"], *refs,
                                  raw_label=normalize_label(values["label"]), frames=frames))
    if problems:
        raise IngestionError(f"{annotation_path}: {len(problems)} malformed row(s)", problems)
    return DatasetIndex(samples, root=root)


def write_index(index: DatasetIndex, path) -> None:
    """Write ``index`` back to the annotation CSV schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for s in index.samples:
            w.writerow([s.subject, s.clip, s.onset, s.apex, s.offset, s.raw_label])


# ---------------------------------------------------------------------------
# label protocols
# ---------------------------------------------------------------------------

def _vocab_order(labels: Iterable[str]) -> list[str]:
    present = set(labels)
    return [name for name in VOCABULARY if name in present]


def map_labels(index: DatasetIndex, protocol: int) -> DatasetIndex:
    """Assign class indices under a 3/5/6/7-class protocol.

    * 5: raw classes with fewer than ten samples are dropped.
    * 3: positive / negative / surprise merge; every other label is dropped.
    * 6, 7: raw labels are used verbatim, nothing is dropped.

    Dropped samples are removed from the returned index and counted in
    ``excluded`` by raw label.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol}")
    unknown = sorted({s.raw_label for s in index.samples} - set(VOCABULARY))
    if unknown:
        raise MappingError(f"unknown raw label(s): {', '.join(unknown)}")
    counts = index.counts()
    if protocol == 3:
        target = {raw: THREE_CLASS.get(raw) for raw in counts}
        names = list(THREE_CLASS_NAMES)
    elif protocol == 5:
        kept = _vocab_order(raw for raw, n in counts.items() if n >= MIN_CLASS_SIZE)
        target = {raw: (raw if raw in kept else None) for raw in counts}
        names = kept
    else:
        names = _vocab_order(counts)
        target = {raw: raw for raw in counts}
    position = {name: i for i, name in enumerate(names)}
    samples, excluded = [], Counter()
    for s in index.samples:
        mapped = target[s.raw_label]
        if mapped is None:
            excluded[s.raw_label] += 1
            continue
        samples.append(replace(s, label=position[mapped]))
    return DatasetIndex(samples, protocol, names, index.root, dict(sorted(excluded.items())))


# ---------------------------------------------------------------------------
# leave-one-subject-out
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    subject: str
    train: list[Sample]
    test: list[Sample]


def check_partition(folds: list[Fold], samples: list[Sample]) -> None:
    """Raise :class:`ProtocolError` unless ``folds`` hold out every sample once, subject-disjointly."""
    tested = Counter(s.sample_id for f in folds for s in f.test)
    all_ids = Counter(s.sample_id for s in samples)
    if tested != all_ids:
        raise ProtocolError("test sets do not cover the index exactly once")
    for f in folds:
        leaked = {s.subject for s in f.train} & {s.subject for s in f.test}
        if leaked:
            raise ProtocolError(f"fold {f.subject}: subject(s) {sorted(leaked)} in train and test")
        if len(f.train) + len(f.test) != len(samples):
            raise ProtocolError(f"fold {f.subject}: train and test do not cover the index")


def loso_splits(index: DatasetIndex) -> list[Fold]:
    """One fold per subject, in sorted subject-id order."""
    subjects = index.subjects()
    if len(subjects) < 2:
        raise ProtocolError(f"LOSO needs at least 2 subjects, index has {len(subjects)}")
    folds = [Fold(subj, [s for s in index.samples if s.subject != subj],
                  [s for s in index.samples if s.subject == subj]) for subj in subjects]
    check_partition(folds, index.samples)
    return folds
