"""Grid sweeps: every (grid point x seed) cell runs in its own worker.

A grid file is JSON::

    {"base": {...experiment config...} or "path/to/config.json",
     "grid": {"agent.gamma_score": [0.95, 0.97, 0.99], ...},
     "seeds": [0, 1, 2],
     "episodes": 200,            # optional override
     "final_window": 100}        # optional, episodes averaged for the final scores

The merged CSV has one row per cell: the swept values, the seed, a status and
the final scores.  A failing cell is recorded with its error and the sweep
carries on.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from .config import ExperimentConfig, load_config, parse_config

RESULT_COLUMNS = ("status", "final_train_score", "final_eval_score", "final_eval_steps",
                  "levels_completed", "episodes", "wall_time", "error")


def grid_cells(grid_spec: dict, base_dir: Optional[Path] = None) -> list:
    """Expand a grid spec into ``(overrides, seed, config)`` cells in a fixed order."""
    base = grid_spec.get("base", {})
    if isinstance(base, str):
        p = Path(base)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        base_cfg = load_config(p)
    else:
        base_cfg = parse_config(base)
    if "episodes" in grid_spec:
        base_cfg = base_cfg.with_overrides({"episodes": grid_spec["episodes"]})
    unknown = set(grid_spec) - {"base", "grid", "seeds", "episodes", "final_window"}
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}")
    grid = grid_spec.get("grid", {})
    keys = list(grid)
    seeds = grid_spec.get("seeds", base_cfg.seeds)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        cfg = base_cfg.with_overrides(overrides)
        for seed in seeds:
            cells.append((overrides, int(seed), cfg))
    return cells


def run_cell(cfg: ExperimentConfig, seed: int, final_window: int = 100) -> dict:
    """Train one cell and summarise it; exceptions become an error row."""
    try:
        if cfg.env.kind == "fruit":
            from .fruit import train_fruit
            log = train_fruit(cfg, seed).log
        else:
            from .maze import train_maze
            log = train_maze(cfg, seed).log
        return summarise(log, final_window)
    except Exception as exc:  # recorded, not raised: the sweep must continue
        return {"status": "error", "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=3)}


def summarise(log, final_window: int = 100) -> dict:
    def tail_mean(name):
        col = log.column(name)
        return float(col[-final_window:].mean()) if col.size else None

    wall = log.column("wall_time")
    return {"status": "ok", "final_train_score": tail_mean("train_score"),
            "final_eval_score": tail_mean("eval_score"), "final_eval_steps": tail_mean("eval_steps"),
            "levels_completed": int(log.column("levels_completed").sum()) if len(log) else 0,
            "episodes": len(log), "wall_time": float(wall[-1]) if wall.size else 0.0}


def _cell_job(args):
    cfg_json, seed, final_window = args
    return run_cell(parse_config(cfg_json), seed, final_window)


def sweep(grid_spec: dict, jobs: int = 1, base_dir: Optional[Path] = None) -> list:
    """Run every cell; returns merged rows in cell order regardless of ``jobs``."""
    cells = grid_cells(grid_spec, base_dir)
    window = int(grid_spec.get("final_window", 100))
    args = [(cfg.model_dump_json(), seed, window) for _, seed, cfg in cells]
    if jobs <= 1:
        results = [_cell_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_job, args))
    rows = []
    for (overrides, seed, _), res in zip(cells, results):
        row = dict(overrides)
        row["seed"] = seed
        row.update({k: res.get(k) for k in RESULT_COLUMNS})
        rows.append(row)
    return rows


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    columns = [k for k in rows[0] if k not in RESULT_COLUMNS] + list(RESULT_COLUMNS)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def load_grid(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid file is not valid JSON: {exc}") from exc


def final_scores(rows: list, column: str = "final_eval_steps") -> np.ndarray:
    return np.array([r[column] for r in rows if r["status"] == "ok" and r[column] is not None], float)
