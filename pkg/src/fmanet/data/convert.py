"""Convert CSV exports of public micro-expression spreadsheets to the annotation schema.

Spreadsheets must first be exported to CSV. Column headers are matched
case-insensitively with whitespace and underscores ignored.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..errors import IngestionError
from .index import COLUMNS


def _key(header: str) -> str:
    return re.sub(r"[\s_]+", "", header).lower()


def _casme2_subject(value: str) -> str:
    value = value.strip()
    return f"sub{int(value):02d}" if value.isdigit() else value


def _samm_subject(value: str) -> str:
    value = value.strip()
    return f"{int(value):03d}" if value.isdigit() else value


@dataclass(frozen=True)
class Layout:
    subject: str
    clip: str
    onset: str
    apex: str
    offset: str
    label: str
    subject_folder: Callable[[str], str] = str.strip


LAYOUTS = {
    "casme2": Layout("subject", "filename", "onsetframe", "apexframe", "offsetframe", "estimatedemotion",
                     _casme2_subject),
    "samm": Layout("subject", "filename", "onsetframe", "apexframe", "offsetframe", "estimatedemotion",
                   _samm_subject),
}


def convert_annotations(source, destination, layout: str) -> int:
    """Rewrite ``source`` as an annotation CSV at ``destination``; return the row count.

    Rows whose frame numbers are not integers (e.g. an unmarked apex) are
    reported together in one :class:`IngestionError`.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {sorted(LAYOUTS)}, got {layout!r}")
    spec = LAYOUTS[layout]
    with Path(source).open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{source}: empty file") from None
        position = {_key(h): i for i, h in enumerate(header)}
        wanted = [spec.subject, spec.clip, spec.onset, spec.apex, spec.offset, spec.label]
        missing = [w for w in wanted if w not in position]
        if missing:
            raise IngestionError(f"{source}: missing column(s) for layout {layout}", missing)
        rows, problems = [], []
        for line, raw in enumerate(reader, start=2):
            if not any(cell.strip() for cell in raw):
                continue
            cells = [raw[position[w]].strip() if position[w] < len(raw) else "" for w in wanted]
            bad = [name for name, cell in zip(COLUMNS[2:5], cells[2:5]) if not cell.isdigit()]
            if bad:
                problems.append(f"line {line}: non-numeric {', '.join(bad)}")
                continue
            rows.append([spec.subject_folder(cells[0]), *cells[1:5], cells[5].lower()])
    if problems:
        raise IngestionError(f"{source}: {len(problems)} row(s) could not be converted", problems)
    with Path(destination).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(rows)
    return len(rows)
