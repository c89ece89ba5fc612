"""Configs, metrics, fruit and maze training loops, sweeps and plot export."""
import json

import numpy as np
import pytest

from hra.errors import ConfigError, InvalidArgument
from hra.harness.config import ExperimentConfig, dump_config, load_config, parse_config
from hra.harness.fruit import (NetworkFruitAgent, TabularFruitAgent, greedy_episode, make_fruit_env,
                               optimal_steps, train_fruit)
from hra.harness.maze import evaluate, play_game, make_world, train_maze
from hra.harness.config import EvalSpec
from hra.harness.metrics import MetricsLog
from hra.harness.plot import moving_average, smooth_log
from hra.harness.sweep import grid_cells, rows_to_csv, sweep
from hra.oracle import shortest_tour_length


def maze_cfg(**agent):
    return parse_config({"env": {"kind": "maze"}, "agent": {"method": "full-maze-hra", **agent},
                         "episodes": 2, "eval": {"eval_every": 1}})


# -- config -----------------------------------------------------------------

def test_defaults_resolve():
    cfg = parse_config({})
    assert cfg.agent.method == "hra" and cfg.env.step_cap == 300
    assert cfg.agent.resolved_gamma == 0.99 and cfg.agent.resolved_step_size == 1e-3
    assert parse_config({"agent": {"target_rule": "max"}}).agent.resolved_gamma == 0.95
    assert parse_config({"agent": {"method": "hra+3"}}).agent.resolved_step_size == 1.0
    assert maze_cfg().env.step_cap == 10_000


def test_incompatible_method_and_env_rejected():
    with pytest.raises(ConfigError):
        parse_config({"env": {"kind": "maze"}, "agent": {"method": "dqn"}})
    with pytest.raises(ConfigError):
        parse_config({"agent": {"method": "full-maze-hra"}})


def test_random_start_without_reference_rejected():
    with pytest.raises(ConfigError):
        parse_config({"env": {"kind": "maze"}, "agent": {"method": "full-maze-hra"},
                      "eval": {"kind": "random-start"}})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        parse_config({"agent": {"learning_rate": 0.1}})
    with pytest.raises(ConfigError):
        parse_config({}).with_overrides({"agent.nope": 1})


def test_overrides_and_round_trip(tmp_path):
    cfg = parse_config({}).with_overrides({"agent.gamma": 0.9, "episodes": 7})
    assert cfg.agent.gamma == 0.9 and cfg.episodes == 7
    path = tmp_path / "c.json"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


# -- metrics and plots ------------------------------------------------------

def test_metrics_stream_and_read(tmp_path):
    log = MetricsLog(tmp_path / "m.csv")
    log.append({"episode": 0, "train_score": 3})
    log.append({"episode": 1, "train_score": 4, "eval_steps": 12.5})
    log.close()
    back = MetricsLog.read(tmp_path / "m.csv")
    assert back.rows == log.rows
    assert np.array_equal(back.column("eval_steps"), [12.5])
    with pytest.raises(KeyError):
        log.append({"bogus": 1})


def test_moving_average_by_hand():
    assert np.allclose(moving_average([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    assert moving_average([], 3).size == 0
    with pytest.raises(InvalidArgument):
        moving_average([1], 0)


def test_smooth_log_columns():
    log = MetricsLog()
    for i in range(4):
        log.append({"episode": i, "train_score": i, "eval_steps": 10 * i if i % 2 else None})
    lines = smooth_log(log, 2).splitlines()
    assert lines[0] == "episode,train_score_smooth2,eval_steps_smooth2"
    assert lines[1] == "0,0,"
    assert lines[4] == "3,2.5,20"


# -- fruit ------------------------------------------------------------------

def test_zero_episodes_gives_empty_log():
    assert len(train_fruit(parse_config({"episodes": 0}), 0).log) == 0


def test_dqn_and_hra_logs_differ():
    def run(method, step):
        agent = {"method": method, "step_size": step, "replay_size": 5000, "update_every": 4}
        return train_fruit(parse_config({"agent": agent, "episodes": 20}), 0).log

    a, b = run("dqn", 0.1), run("hra", 2.0)
    assert a.column("train_score").tolist() == b.column("train_score").tolist()  # same behaviour
    assert a.column("eval_score").tolist() != b.column("eval_score").tolist()


def test_fruit_training_is_reproducible():
    cfg = parse_config({"agent": {"method": "hra", "hidden": 20, "replay_size": 500, "step_size": 0.5},
                        "episodes": 4})
    a, b = train_fruit(cfg, 3).log, train_fruit(cfg, 3).log
    assert [r["eval_steps"] for r in a.rows] == [r["eval_steps"] for r in b.rows]


def test_optimal_steps_match_brute_force():
    env = make_fruit_env(parse_config({}))
    for seed in range(5):
        env.reset(seed)
        tour = shortest_tour_length(env.agent_pos, sorted(env.active_fruits))
        assert optimal_steps(env) == tour


def test_hra3_learns_near_optimal_quickly():
    res = train_fruit(parse_config({"agent": {"method": "hra+3", "gamma": 0.95}, "episodes": 60}), 0)
    assert isinstance(res.agent, TabularFruitAgent)
    env = make_fruit_env(parse_config({}))
    runs = [greedy_episode(env, res.agent, 1000 + i) for i in range(20)]
    assert all(score == 5 for score, _, _ in runs)
    assert np.mean([s for _, s, _ in runs]) <= 2 * np.mean([o for _, _, o in runs])


def test_hra2_tables_only_learn_present_fruit():
    cfg = parse_config({"agent": {"method": "hra+2"}, "episodes": 1})
    agent = train_fruit(cfg, 0).agent
    assert agent.tables.shape == (10, 100, 4)
    assert agent.tables.max() <= 1.0 and agent.tables.min() >= 0.0


def test_plus_one_variant_masks_heads():
    agent = train_fruit(parse_config({"agent": {"method": "hra+1", "hidden": 20}, "episodes": 1}), 0).agent
    assert isinstance(agent, NetworkFruitAgent) and agent.net.mask1 is not None


# -- maze -------------------------------------------------------------------

def test_maze_eval_leaves_agent_untouched_and_repeats_match():
    cfg = maze_cfg()
    res = train_maze(cfg, 0, episodes=1)
    table = res.agent.score_bank.table(0).copy()
    ev = evaluate(res.agent, cfg, res.game_seed, EvalSpec(kind="fixed-start", episodes=2, max_noops=0))
    assert ev["scores"][0] == ev["scores"][1]
    assert np.array_equal(res.agent.score_bank.table(0), table)
    assert len(res.log) == 1 and res.log.rows[0]["eval_score"] is not None


def test_random_start_from_one_state_reference_equals_fixed_start():
    cfg = maze_cfg()
    res = train_maze(cfg, 0, episodes=1)
    world = make_world(cfg, res.game_seed)
    world.reset(res.game_seed)
    ref = play_game(world, res.agent, np.random.default_rng(0), False, 1, record=True).log
    ref.transitions = []  # a reference that holds only the start state
    fixed = evaluate(res.agent, cfg, res.game_seed, EvalSpec(kind="fixed-start", max_noops=0))
    rand = evaluate(res.agent, cfg, res.game_seed, EvalSpec(kind="random-start", reference="x"),
                    reference=ref)
    assert fixed["scores"] == rand["scores"]


def test_random_start_needs_a_reference():
    cfg = maze_cfg()
    spec = EvalSpec(kind="fixed-start")
    object.__setattr__(spec, "kind", "random-start")
    with pytest.raises(ConfigError):
        evaluate(train_maze(cfg, 0, episodes=0).agent, cfg, 0, spec)


def test_train_maze_rejects_fruit_configs():
    with pytest.raises(ConfigError):
        train_maze(parse_config({}), 0)


# -- sweep ------------------------------------------------------------------

GRID = {"base": {"agent": {"method": "hra+3"}, "episodes": 2},
        "grid": {"agent.gamma": [0.9, 0.95, 0.99], "agent.step_size": [0.5, 0.75, 1.0]},
        "seeds": [0, 1, 2]}


def test_sweep_rows_and_job_independence():
    cells = grid_cells(GRID)
    assert len(cells) == 27
    one = sweep(GRID, jobs=1)
    assert len(one) == 27 and all(r["status"] == "ok" for r in one)
    again = sweep(GRID, jobs=1)
    many = sweep(GRID, jobs=3)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]  # noqa: E731
    assert strip(one) == strip(again) == strip(many)
    csv_text = rows_to_csv(one)
    assert csv_text.splitlines()[0].startswith("agent.gamma,agent.step_size,seed,status")


def test_sweep_records_failing_cells():
    grid = {"base": {"episodes": 1}, "grid": {"env.fruit_slots": [[[0, 0]], None]}, "seeds": [0]}
    rows = sweep(grid)
    assert rows[0]["status"] == "error" and "n_fruits" in rows[0]["error"]
    assert rows[1]["status"] == "ok"


def test_sweep_rejects_unknown_grid_keys():
    with pytest.raises(ConfigError):
        grid_cells({"base": {}, "grids": {}})


def test_config_file_example(tmp_path):
    cfg = ExperimentConfig(name="demo", episodes=1)
    (tmp_path / "base.json").write_text(dump_config(cfg))
    cells = grid_cells({"base": "base.json", "seeds": [4]}, tmp_path)
    assert cells[0][1] == 4 and cells[0][2].name == "demo"
    assert json.loads(dump_config(cfg))["name"] == "demo"
