"""Aggregators, exploration, executive memory and the full maze agent."""
import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hra.agent import (FORCE, LINEAR_SUM, NORMALIZED, AgentSettings, AggregatorSpec,
                       ExecutiveMemory, ExplorationState, HraAgent, aggregate,
                       diversification_values, select_action)
from hra.envs.maze import NOOP, MazeWorld
from hra.errors import InvalidArgument


def test_linear_sum_and_normalized():
    v = np.array([[1.0, 2.0, 3.0], [0.0, 2.0, 0.0], [-5.0, 0.0, 0.0]])
    ghosts = [False, False, True]
    assert np.allclose(aggregate(v, AggregatorSpec(LINEAR_SUM)), [-4, 4, 3])
    # score columns 1, 4, 3 -> 0, 1, 2/3; ghost row added as is
    assert np.allclose(aggregate(v, AggregatorSpec(NORMALIZED), ghosts), [-5, 1, 2 / 3])
    assert np.allclose(aggregate(np.ones((2, 3)), AggregatorSpec(NORMALIZED)), 0)
    with pytest.raises(InvalidArgument):
        aggregate(np.zeros((0, 3)), AggregatorSpec())
    with pytest.raises(InvalidArgument):
        AggregatorSpec("product")


def test_default_ghost_weights():
    assert AggregatorSpec(LINEAR_SUM).ghost_weight == -1000
    assert AggregatorSpec(NORMALIZED).ghost_weight == -10
    assert AggregatorSpec(NORMALIZED, -3.0).ghost_weight == -3.0


def test_count_bonus_formula():
    es = ExplorationState(5, kappa=2.0)
    for _ in range(16):
        es.record("s", 1)
    b = es.bonus("s")
    assert b[1] == pytest.approx(2.0 * np.sqrt(16 ** 0.25 / 17))
    assert b[0] == pytest.approx(2.0 * np.sqrt(2.0))
    assert np.allclose(es.bonus("never"), 2.0 * np.sqrt(2.0))


def test_diversification_window():
    rng = np.random.default_rng(0)
    v = diversification_values(10, rng, 5, 50, 20.0)
    assert v.shape == (5,) and v.min() >= 0 and v.max() < 20
    assert np.all(diversification_values(50, rng, 5, 50) == 0)


def test_memory_commits_only_clean_levels():
    mem = ExecutiveMemory()
    mem.start_level(1)
    for i, a in enumerate([0, 1, 2]):
        mem.record(1, i, a)
    assert mem.on_level_complete(1)
    assert mem.recorded[1] == [0, 1, 2]
    forced = mem.step(1, 1, 5)
    assert forced[1] == FORCE and forced.sum() == FORCE
    assert np.all(mem.step(1, 3, 5) == 0)
    # a death taints level 2
    for i, a in enumerate([3, 3]):
        mem.record(2, i, a)
    mem.on_death()
    assert not mem.on_level_complete(2)
    assert 2 not in mem.recorded
    # first commit wins
    mem.start_level(1)
    mem.record(1, 0, 4)
    assert not mem.on_level_complete(1)
    assert mem.recorded[1] == [0, 1, 2]
    mem.active = False
    assert np.all(mem.step(1, 0, 5) == 0)


def test_memory_ignores_mid_level_joins():
    mem = ExecutiveMemory()
    mem.start_level(1)
    mem.record(1, 5, 2)
    assert not mem.on_level_complete(1)


def test_select_action_sums_and_breaks_ties_low():
    z = np.zeros(4)
    assert select_action([1, 3, 3, 0], z, z, z) == 1
    assert select_action([1, 3, 3, 0], z, [0, 0, 0, 5], z) == 3
    assert select_action(z, z, z, [0, 0, FORCE, 0]) == 2
    with pytest.raises(InvalidArgument):
        select_action(np.zeros(3), z, z, z)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-100, 100), min_size=2, max_size=6))
def test_normalized_scores_in_unit_interval(v):
    row = np.array([v])
    out = aggregate(row, AggregatorSpec(NORMALIZED))
    assert out.min() >= 0 and out.max() <= 1 + 1e-12


def _played(agent, steps=300, seed=0):
    world = MazeWorld(game_seed=seed)
    world.reset()
    agent.begin_episode(world)
    rng = np.random.default_rng(seed)
    t = 0
    while not world.done and world.steps < steps:
        if not world.active:
            world.step(NOOP)
            continue
        tr = world.step(agent.act(world, t, rng))
        t += 1
        agent.learn(tr, world)
    return world


def test_acting_does_not_change_the_agent():
    agent = HraAgent()
    world = _played(agent)
    before = copy.deepcopy(agent)
    rng = np.random.default_rng(1)
    for t in range(20):
        agent.act(world, t, rng)
    assert np.array_equal(agent.score_bank.table(world.map_id), before.score_bank.table(world.map_id))
    assert agent.exploration.total == before.exploration.total


def test_agent_grows_gvfs_and_heads_from_experience():
    agent = HraAgent(AgentSettings(gamma_ghosts=0.9))
    assert len(agent.banks) == 2
    _played(agent, 600)
    assert agent.gvf_count > 10
    assert agent.head_count > 0
    assert agent.exploration.total > 0
