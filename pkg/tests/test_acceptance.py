"""Acceptance criteria, each at its stated tolerance and time budget.

Every test records one pass/fail line; the lines are printed together at the
end of the pytest run (see conftest.py).  Criteria 5 and 6 train many seeds
and are marked slow.
"""
import copy
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from hra.envs.fruit import FruitGrid
from hra.envs.maze import LEVEL_COMPLETE, LIFE_LOST
from hra.harness.config import EvalSpec, load_config
from hra.harness.fruit import train_fruit
from hra.harness.maze import bundled_reference_path, evaluate, make_world, play_game, train_maze
from hra.mdp import EpisodeLog
from hra.verify import (measure_expected_sarsa, measure_gradients, measure_inconsistency,
                        measure_upsilon_identity)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_criterion_1_upsilon_identity(criterion):
    m = measure_upsilon_identity(n_mdps=50, gamma=0.9)
    ok = m["max_deviation"] < 1e-8 and m["seconds"] < 10
    criterion(1, ok, f"max deviation {m['max_deviation']:.2e} over 50 MDPs in {m['seconds']:.2f}s")
    assert ok


def test_criterion_2_optimal_heads_inconsistent(criterion):
    m = measure_inconsistency(0.9)
    ok = m["sup_norm"] > 0.1 and len(m["differing_states"]) >= 1 and m["seconds"] < 1
    criterion(2, ok, f"sup-norm {m['sup_norm']:.3f}, greedy differs in states {m['differing_states']}, "
                     f"{m['seconds']:.3f}s")
    assert ok


def test_criterion_3_mean_rule_sweeps(criterion):
    m = measure_expected_sarsa()
    ok = m["max_error"] < 1e-6 and m["gvf_min"] >= 0 and m["gvf_max"] <= 1 and m["seconds"] < 5
    criterion(3, ok, f"max error {m['max_error']:.2e}, GVF range [{m['gvf_min']:.3f}, "
                     f"{m['gvf_max']:.3f}], {m['seconds']:.2f}s")
    assert ok


def test_criterion_4_gradients(criterion):
    m = measure_gradients(n_nets=20)
    ok = m["max_relative_error"] < 1e-4 and m["aggregation_unchanged"] and m["seconds"] < 10
    criterion(4, ok, f"max relative error {m['max_relative_error']:.2e}, aggregation bit-identical "
                     f"{m['aggregation_unchanged']}, {m['seconds']:.2f}s")
    assert ok


# -- fruit ------------------------------------------------------------------

FRUIT_METHODS = ("hra+3", "hra+1", "hra", "dqn")


def _fruit_final(method: str, seed: int, window: int = 100) -> dict:
    cfg = load_config(CONFIGS / f"fruit_{method.replace('+', 'plus')}.json")
    log = train_fruit(cfg, seed).log
    return {"steps": float(log.column("eval_steps")[-window:].mean()),
            "complete": log.column("eval_score")[-window:] == FruitGrid().n_fruits,
            "optimal": log.column("optimal_steps")[-window:]}


@pytest.mark.slow
def test_criterion_5_fruit_ordering(criterion):
    t0 = time.perf_counter()
    seeds = range(10)
    res = {m: [_fruit_final(m, s) for s in seeds] for m in FRUIT_METHODS}
    mean = {m: float(np.mean([r["steps"] for r in res[m]])) for m in FRUIT_METHODS}
    order = mean["hra+3"] <= mean["hra+1"] <= mean["hra"] < mean["dqn"]
    hra = [r["steps"] for r in res["hra"]]
    dqn = [r["steps"] for r in res["dqn"]]
    p = float(stats.mannwhitneyu(hra, dqn, alternative="less").pvalue)
    complete = float(np.mean(np.concatenate([r["complete"] for r in res["hra+3"]])))
    optimum = float(np.mean(np.concatenate([r["optimal"] for r in res["hra+3"]])))
    ok = order and p < 0.05 and complete >= 0.95 and mean["hra+3"] <= 2 * optimum
    minutes = (time.perf_counter() - t0) / 60
    criterion(5, ok, "final-100 mean steps " + ", ".join(f"{m} {mean[m]:.2f}" for m in FRUIT_METHODS)
              + f"; ordering {order}; rank test p={p:.2g}; hra+3 complete {complete:.3f}, "
                f"VI optimum {optimum:.2f}; {minutes:.1f} min")
    assert ok


# -- maze -------------------------------------------------------------------

MAZE_EPISODES = 60


def _maze_run(name: str, seed: int) -> dict:
    cfg = load_config(CONFIGS / f"maze_{name}.json").with_overrides(
        {"episodes": MAZE_EPISODES, "eval.eval_every": MAZE_EPISODES + 1})
    log = train_maze(cfg, seed).log
    return {"levels": int(log.column("levels_completed").sum()),
            "final_score": float(log.column("train_score")[-20:].mean())}


@pytest.mark.slow
def test_criterion_6_maze_ablations(criterion):
    t0 = time.perf_counter()
    seeds = range(20)
    full = [_maze_run("full", s) for s in seeds]
    linear = [_maze_run("linear_sum", s) for s in seeds]
    bare = [_maze_run("no_exploration", s) for s in range(5)]
    full_score = float(np.mean([r["final_score"] for r in full[:5]]))
    bare_score = float(np.mean([r["final_score"] for r in bare]))
    wins = sum(f["levels"] > l["levels"] for f, l in zip(full, linear))
    losses = sum(f["levels"] < l["levels"] for f, l in zip(full, linear))
    p = float(stats.binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue) if wins + losses else 1.0
    ok = bare_score < 0.2 * full_score and p < 0.05
    minutes = (time.perf_counter() - t0) / 60
    criterion(6, ok, f"no-exploration final score {bare_score:.0f} vs full {full_score:.0f}; levels "
                     f"normalized {sum(r['levels'] for r in full)} vs linear-sum "
                     f"{sum(r['levels'] for r in linear)}, sign test {wins}-{losses} p={p:.2g}; "
                     f"{minutes:.1f} min")
    assert ok


def _first_level(world, agent, eval_seed):
    """Fixed-start game until level 1 ends; returns (actions, completed, deaths before completion)."""
    res = play_game(world, agent, np.random.default_rng([eval_seed, 17]), True, 3000,
                    noops=int(np.random.default_rng([eval_seed, 13]).integers(0, 31)), record=True)
    actions, deaths = [], 0
    for t in res.log.transitions:
        if "inactive" in t.events:
            continue
        actions.append(t.a)
        deaths += LIFE_LOST in t.events
        if LEVEL_COMPLETE in t.events:
            return actions, True, deaths
    return actions, False, deaths


def test_criterion_7_executive_memory(criterion):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "maze_memory.json").with_overrides({"eval.eval_every": 10_000})
    seed = 0
    res = train_maze(cfg, seed, episodes=1)
    agent, game_seed = res.agent, res.game_seed
    for _ in range(150):
        if 1 in agent.memory.recorded:
            break
        train_maze(cfg, seed, episodes=1, agent=agent)
    committed = 1 in agent.memory.recorded

    world = make_world(cfg, game_seed)
    runs = []
    for rep in range(10):
        world.reset(game_seed)
        runs.append(_first_level(world, copy.deepcopy(agent), eval_seed=rep))
    clean = sum(done and deaths == 0 for _, done, deaths in runs)
    identical = all(r[0] == runs[0][0] for r in runs)

    reference = EpisodeLog.from_csv(bundled_reference_path())
    spec = EvalSpec(kind="random-start", episodes=10, reference=str(bundled_reference_path()))
    off = copy.deepcopy(agent)
    off.memory.active = False
    with_memory = evaluate(agent, cfg, game_seed, spec, eval_seed=1, reference=reference)["scores"]
    without = evaluate(off, cfg, game_seed, spec, eval_seed=1, reference=reference)["scores"]
    diff = np.asarray(with_memory, float) - np.asarray(without, float)
    if np.any(diff != 0):
        p_better = float(stats.wilcoxon(diff, zero_method="zsplit", alternative="greater").pvalue)
    else:
        p_better = 1.0
    seconds = time.perf_counter() - t0
    ok = committed and clean == 10 and identical and p_better >= 0.05 and seconds < 120
    criterion(7, ok, f"level 1 committed {committed}; fixed-start replays clean {clean}/10, identical "
                     f"{identical}; random-start mean {np.mean(with_memory):.0f} with memory vs "
                     f"{np.mean(without):.0f} without (improvement p={p_better:.2g}); {seconds:.0f}s")
    assert ok
