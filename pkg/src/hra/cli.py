"""Command line: train, eval, record, verify, sweep, plot."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .errors import HraError, InvalidArgument


def _cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .harness.config import load_config

    cfg = load_config(args.config)
    if args.episodes is not None:
        cfg = cfg.with_overrides({"episodes": args.episodes})
    out = Path(args.output or cfg.output or "runs") / f"{cfg.name}-seed{args.seed}"
    log_path = out.with_suffix(".csv")
    t0 = time.perf_counter()
    if cfg.env.kind == "fruit":
        from .harness.fruit import train_fruit
        res = train_fruit(cfg, args.seed, log_path=log_path)
        game_seed = None
    else:
        from .harness.maze import train_maze
        res = train_maze(cfg, args.seed, log_path=log_path)
        game_seed = res.game_seed
    ckpt = save_checkpoint(out.with_suffix(".zip"), cfg, res.agent, args.seed, game_seed)
    log = res.log
    summary = {"episodes": len(log), "log": str(log_path), "checkpoint": str(ckpt),
               "seconds": round(time.perf_counter() - t0, 1)}
    for col in ("train_score", "eval_score", "eval_steps"):
        v = log.column(col)
        if v.size:
            summary[f"final_{col}"] = float(v[-100:].mean())
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .harness.config import EvalSpec

    cfg, agent, meta = load_checkpoint(args.checkpoint)
    kind = {"fixed": "fixed-start", "random": "random-start"}[args.protocol]
    if cfg.env.kind == "fruit":
        if kind != "fixed-start":
            raise InvalidArgument("the fruit grid starts at random already; use --protocol fixed")
        from .harness.fruit import episode_seed, greedy_episode, make_fruit_env
        env = make_fruit_env(cfg)
        runs = [greedy_episode(env, agent, episode_seed(args.seed, i, 1)) for i in range(args.episodes)]
        steps = [r[1] for r in runs]
        result = {"protocol": kind, "mean_steps": float(np.mean(steps)), "min_steps": min(steps),
                  "max_steps": max(steps), "mean_fruits": float(np.mean([r[0] for r in runs])),
                  "mean_optimal_steps": float(np.mean([r[2] for r in runs]))}
    else:
        from .harness.maze import bundled_reference_path, evaluate
        reference = None
        if kind == "random-start":
            reference = args.reference or str(bundled_reference_path())
        proto = EvalSpec(kind=kind, episodes=args.episodes, reference=reference)
        result = evaluate(agent, cfg, meta.get("game_seed") or 0, proto, eval_seed=args.seed)
    print(json.dumps(result, indent=2))
    return 0


def _cmd_record(args) -> int:
    """Play one fixed-start game with a checkpoint and write its EpisodeLog."""
    from .checkpoint import load_checkpoint
    from .harness.maze import make_world, play_game

    cfg, agent, meta = load_checkpoint(args.checkpoint)
    if cfg.env.kind != "maze":
        raise InvalidArgument("record works on maze checkpoints")
    game_seed = meta.get("game_seed") or 0
    world = make_world(cfg, game_seed)
    world.reset(game_seed)
    res = play_game(world, agent, np.random.default_rng([args.seed, 17]), True, cfg.env.step_cap,
                    record=True)
    res.log.to_csv(args.out)
    print(json.dumps({"out": args.out, "steps": res.steps, "score": res.score,
                      "levels": res.levels_completed}))
    return 0


def _cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks()
    width = max(len(r[0]) for r in results)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{name:<{width}}  {'PASS' if passed else 'FAIL'}  {detail}")
    return 0 if ok else 1


def _cmd_sweep(args) -> int:
    from .harness.sweep import load_grid, rows_to_csv, sweep

    grid_path = Path(args.grid)
    rows = sweep(load_grid(grid_path), jobs=args.jobs, base_dir=grid_path.parent)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_plot(args) -> int:
    from .harness.metrics import MetricsLog
    from .harness.plot import smooth_log

    text = smooth_log(MetricsLog.read(args.log), args.smooth)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hra", description="Hybrid reward architecture experiments")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one seed from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--episodes", type=int)
    t.add_argument("--output", help="directory for the metrics CSV and checkpoint")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--protocol", choices=("fixed", "random"), default="fixed")
    e.add_argument("--reference", help="EpisodeLog CSV for random starts (default: bundled)")
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=_cmd_eval)

    r = sub.add_parser("record", help="write the EpisodeLog of one fixed-start maze game")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=_cmd_record)

    v = sub.add_parser("verify", help="run the exact-oracle checks and print a pass/fail table")
    v.set_defaults(func=_cmd_verify)

    s = sub.add_parser("sweep", help="run a grid of configs x seeds")
    s.add_argument("--grid", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("plot", help="smooth a metrics CSV into plot-ready columns")
    pl.add_argument("--log", required=True)
    pl.add_argument("--smooth", type=int, default=100)
    pl.add_argument("--out")
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HraError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
