"""Longer behavioural examples for the maze agent."""
from pathlib import Path

import numpy as np
import pytest

from hra.envs.maze import NOOP
from hra.harness.config import load_config
from hra.harness.maze import make_world, run_game_seed, train_maze

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _random_policy_score(cfg, seed, games=20):
    world = make_world(cfg)
    rng = np.random.default_rng(seed)
    scores = []
    for g in range(games):
        world.reset(run_game_seed(cfg, g))
        while not world.done and world.steps < cfg.env.step_cap:
            world.step(int(rng.integers(5)) if world.active else NOOP)
        scores.append(world.score)
    return float(np.mean(scores))


@pytest.mark.slow
def test_full_agent_beats_random_policy_fivefold():
    cfg = load_config(CONFIGS / "maze_full.json").with_overrides({"episodes": 500, "eval.eval_every": 501})
    log = train_maze(cfg, 0).log
    trained = float(log.column("train_score")[-50:].mean())
    baseline = _random_policy_score(cfg, 0)
    assert trained >= 5 * baseline, (trained, baseline)
