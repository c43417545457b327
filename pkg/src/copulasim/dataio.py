"""Reading and writing two-group datasets (CSV with header ``group,dose,y1,y2``)."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .likelihood import BINARY, CONTINUOUS, GroupSample

HEADER = ("group", "dose", "y1", "y2")


class SchemaError(ValueError):
    """Malformed dataset or config file; the message carries the line number."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)
        self.line = line


def _kinds_from(kinds) -> tuple:
    out = tuple(kinds)
    if len(out) != 2 or any(k not in (BINARY, CONTINUOUS) for k in out):
        raise ValueError(f"outcome kinds must be two of {BINARY!r}/{CONTINUOUS!r}")
    return out


def parse_dataset(text: str, kinds, source: str | None = None) -> tuple:
    """Parse CSV text into ``(sample_group1, sample_group2)``."""
    kinds = _kinds_from(kinds)
    lines = text.splitlines()
    if not lines or not any(ln.strip() for ln in lines):
        raise SchemaError("empty dataset", 1, source)
    reader = csv.reader(io.StringIO(text))
    rows = {1: [], 2: []}
    header_seen = False
    for lineno, rec in enumerate(reader, start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        cells = [c.strip() for c in rec]
        if not header_seen:
            if tuple(c.lower() for c in cells) != HEADER:
                raise SchemaError(f"header must be {','.join(HEADER)}, got {','.join(cells)}", lineno, source)
            header_seen = True
            continue
        if len(cells) != 4:
            raise SchemaError(f"expected 4 fields, got {len(cells)}", lineno, source)
        if any(c == "" or c.lower() in ("na", "nan") for c in cells):
            raise SchemaError("missing cell", lineno, source)
        try:
            g = int(cells[0])
        except ValueError:
            raise SchemaError(f"group must be 1 or 2, got {cells[0]!r}", lineno, source) from None
        if g not in (1, 2):
            raise SchemaError(f"group must be 1 or 2, got {g}", lineno, source)
        try:
            vals = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise SchemaError(f"non-numeric value ({exc})", lineno, source) from None
        if not all(math.isfinite(v) for v in vals):
            raise SchemaError("values must be finite", lineno, source)
        for kind, v, name in zip(kinds, vals[1:], ("y1", "y2")):
            if kind == BINARY and v not in (0.0, 1.0):
                raise SchemaError(f"binary column {name} must be 0 or 1, got {v:g}", lineno, source)
        rows[g].append(vals)
    if not header_seen:
        raise SchemaError("empty dataset", 1, source)
    for g in (1, 2):
        if not rows[g]:
            raise SchemaError(f"group {g} has no rows", None, source)
    out = []
    for g in (1, 2):
        a = np.asarray(rows[g], dtype=float)
        out.append(GroupSample(a[:, 0], a[:, 1], a[:, 2], kinds))
    return tuple(out)


def read_dataset(path, kinds) -> tuple:
    path = Path(path)
    return parse_dataset(path.read_text(), kinds, source=str(path))


def _fmt(v: float, binary: bool) -> str:
    return str(int(v)) if binary else repr(float(v))


def format_dataset(sample1: GroupSample, sample2: GroupSample) -> str:
    """CSV text; floats use shortest round-trip repr so output is byte-stable."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for g, s in ((1, sample1), (2, sample2)):
        b1, b2 = (k == BINARY for k in s.kinds)
        for x, a, b in zip(s.dose, s.y1, s.y2):
            w.writerow((g, repr(float(x)), _fmt(a, b1), _fmt(b, b2)))
    return buf.getvalue()


def write_dataset(path, sample1: GroupSample, sample2: GroupSample):
    Path(path).write_text(format_dataset(sample1, sample2))
