"""Deterministic CSV tables."""
from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class Table:
    """Column names, rows and a free-form summary (not written to the CSV)."""

    header: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name):
        i = self.header.index(name)
        return [r[i] for r in self.rows]


def format_cell(value) -> str:
    """Shortest round-trip text for floats, ``1``/``0`` for booleans."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(value, (complex, np.complexfloating)):
        raise DomainError("split complex values into real and imaginary columns")
    return str(value)


def render_csv(table: Table) -> str:
    if not table.rows:
        raise DomainError("refusing to write an empty table")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        if len(row) != len(table.header):
            raise DomainError(f"row has {len(row)} cells, header has {len(table.header)}")
        writer.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def emit_csv(table: Table, path=None):
    """Write UTF-8 CSV with LF line endings to ``path`` (stdout when ``None`` or ``-``)."""
    text = render_csv(table)
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parse_cell(s: str):
    for kind in (int, float):
        try:
            return kind(s)
        except ValueError:
            pass
    return s


def read_csv(path) -> Table:
    """Inverse of :func:`emit_csv`: integers and floats come back as numbers."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse_cell(c) for c in r] for r in reader]
    return Table(header, rows)
