"""Per-episode metrics, kept in memory and optionally streamed to CSV."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional

import numpy as np

COLUMNS = ("episode", "train_score", "train_steps", "eval_score", "eval_steps", "optimal_steps",
           "levels_completed", "deaths", "head_count", "gvf_count", "wall_time")


class MetricsLog:
    """Rows with a fixed header; absent values are written as empty cells."""

    def __init__(self, path=None):
        self.rows: list = []
        self.path = Path(path) if path else None
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(COLUMNS)

    def append(self, row: dict) -> None:
        unknown = set(row) - set(COLUMNS)
        if unknown:
            raise KeyError(f"unknown metric columns {sorted(unknown)}")
        self.rows.append(dict(row))
        if self._fh is not None:
            self._writer.writerow([_fmt(row.get(c)) for c in COLUMNS])
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def column(self, name: str) -> np.ndarray:
        """Values of one column, skipping rows where it is absent."""
        return np.array([r[name] for r in self.rows if r.get(name) is not None], dtype=float)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def read(cls, source) -> "MetricsLog":
        text = Path(source).read_text() if not hasattr(source, "read") else source.read()
        reader = csv.DictReader(io.StringIO(text))
        log = cls()
        for rec in reader:
            log.rows.append({k: _parse(v) for k, v in rec.items() if k in COLUMNS and v != ""})
        return log


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if not v.is_integer() else str(int(v)) if abs(v) < 1e15 else repr(v)
    return str(v)


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)
