"""Plot-ready export: trailing moving averages of a metrics log."""
from __future__ import annotations

import csv
import io

import numpy as np

from ..errors import InvalidArgument
from .metrics import MetricsLog

SMOOTHED = ("train_score", "eval_score", "eval_steps", "levels_completed")


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` values (shorter at the start)."""
    if window < 1:
        raise InvalidArgument("smoothing window must be >= 1")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v
    c = np.concatenate(([0.0], np.cumsum(v)))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def smooth_log(log: MetricsLog, window: int) -> str:
    """CSV with the episode column and one smoothed column per available metric."""
    present = [c for c in SMOOTHED if log.column(c).size]
    series = {}
    for name in present:
        eps = np.array([r["episode"] for r in log.rows if r.get(name) is not None])
        series[name] = dict(zip(eps.tolist(), moving_average(log.column(name), window)))
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["episode"] + [f"{c}_smooth{window}" for c in present])
    for r in log.rows:
        ep = r["episode"]
        w.writerow([ep] + [_fmt(series[c].get(ep)) for c in present])
    return buf.getvalue()


def _fmt(v):
    return "" if v is None else f"{v:.6g}"
