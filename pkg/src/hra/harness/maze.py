"""Training and evaluation of the full HRA agent in the maze world.

A run (config, seed) plays one fixed game: the game seed is derived from the
config's ``game_seed`` and the run seed and stays the same for every episode,
so the game has a fixed start, as in the deterministic arcade setting.
"""
from __future__ import annotations

import copy
import time
from importlib import resources
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..agent import AgentSettings, HraAgent
from ..envs.maze import NOOP, MazeWorld, load_maps
from ..errors import ConfigError, InvalidArgument
from ..mdp import EpisodeLog
from .config import EvalSpec, ExperimentConfig
from .metrics import MetricsLog


def bundled_reference_path():
    """Reference trajectory shipped with the package (a trained agent's fixed-start game)."""
    return resources.files("hra").joinpath("data", "reference_trajectory.csv")


def run_game_seed(cfg: ExperimentConfig, seed: int) -> int:
    return int(np.random.SeedSequence([cfg.env.game_seed, seed, 7]).generate_state(1)[0])


def make_world(cfg: ExperimentConfig, game_seed: int = 0) -> MazeWorld:
    e = cfg.env
    return MazeWorld(load_maps(e.maps), lives=e.lives, start_delay=e.start_delay,
                     ghost_release=e.ghost_release, chase_prob=e.chase_prob,
                     ghost_speed=e.ghost_speed, game_seed=game_seed)


def agent_settings(cfg: ExperimentConfig) -> AgentSettings:
    a = cfg.agent
    return AgentSettings(aggregator=a.aggregator, ghost_weight=a.ghost_weight,
                         gamma_score=a.gamma_score, gamma_ghosts=a.gamma_ghosts,
                         gvf_rule=a.target_rule, diversification=a.diversification,
                         div_window=a.div_window, count_bonus=a.count_bonus, kappa=a.kappa,
                         memory=a.memory)


@dataclass
class GameResult:
    score: int
    steps: int
    levels_completed: int
    deaths: int
    log: Optional[EpisodeLog] = None


def play_game(world: MazeWorld, agent: HraAgent, rng: np.random.Generator, learn: bool,
              max_steps: int, noops: int = 0, prefix=(), record: bool = False) -> GameResult:
    """Play from the world's current (already reset) state until game over or ``max_steps``.

    ``noops`` no-op actions are issued first, then the ``prefix`` actions,
    then the agent takes over.  ``t`` (the diversification clock) counts the
    agent's own active steps.  With ``learn`` off nothing in the agent changes.
    """
    transitions = []
    for a in list([NOOP] * noops) + list(prefix):
        if world.done or world.steps >= max_steps:
            break
        t = world.step(int(a))
        if record:
            transitions.append(t)
    base_score, base_levels, base_deaths = world.score, world.levels_completed, world.deaths
    if learn:
        agent.begin_episode(world)
    t_agent = 0
    while not world.done and world.steps < max_steps:
        if not world.active:
            tr = world.step(NOOP)
        else:
            tr = world.step(agent.act(world, t_agent, rng))
            t_agent += 1
            if learn:
                agent.learn(tr, world)
        if record:
            transitions.append(tr)
    log = EpisodeLog(transitions, world.game_seed, list(world.component_names)) if record else None
    # only what the agent itself achieved counts
    return GameResult(int(world.score - base_score), int(world.steps),
                      int(world.levels_completed - base_levels), int(world.deaths - base_deaths), log)


@dataclass
class MazeResult:
    log: MetricsLog
    agent: HraAgent
    game_seed: int


def train_maze(cfg: ExperimentConfig, seed: int, episodes: Optional[int] = None,
               log_path=None, agent: Optional[HraAgent] = None) -> MazeResult:
    """Train one seed.  Each row holds the training game; every ``eval.eval_every``
    episodes one fixed-start evaluation game is added."""
    if cfg.env.kind != "maze" or cfg.agent.method != "full-maze-hra":
        raise ConfigError("train_maze needs a maze environment and the full-maze-hra method")
    episodes = cfg.episodes if episodes is None else episodes
    game_seed = run_game_seed(cfg, seed)
    world = make_world(cfg, game_seed)
    agent = agent or HraAgent(agent_settings(cfg), world.maps)
    rng = np.random.default_rng([seed, 11])
    cap = cfg.env.step_cap
    log = MetricsLog(log_path)
    t0 = time.perf_counter()
    for ep in range(episodes):
        world.reset(game_seed)
        res = play_game(world, agent, rng, True, cap)
        row = dict(episode=ep, train_score=res.score, train_steps=res.steps,
                   levels_completed=res.levels_completed, deaths=res.deaths,
                   head_count=agent.head_count, gvf_count=agent.gvf_count)
        if (ep + 1) % cfg.eval.eval_every == 0 and cfg.eval.kind == "fixed-start":
            ev = evaluate(agent, cfg, game_seed, EvalSpec(kind="fixed-start", episodes=1),
                          eval_seed=int(ep))
            row.update(eval_score=ev["mean"], eval_steps=ev["steps"][0])
        row["wall_time"] = time.perf_counter() - t0
        log.append(row)
    log.close()
    return MazeResult(log, agent, game_seed)


def evaluate(agent: HraAgent, cfg: ExperimentConfig, game_seed: int, protocol: EvalSpec,
             episodes: Optional[int] = None, eval_seed: int = 0, reference: Optional[EpisodeLog] = None) -> dict:
    """Evaluation games that leave ``agent`` untouched.

    Each game is played by a fresh deep copy of the agent, which keeps
    updating its own GVFs, visit counts and memory during the game (frozen
    visit counts would pin the count bonus and trap the agent in loops).

    fixed-start: reset to the run's game, then a seeded no-op prefix in
    [0, max_noops] (absorbed by the start delay when it is shorter).
    random-start: replay a uniformly drawn prefix of the reference
    trajectory's actions, then hand over to the agent; the reference's own
    game seed is used.  Action-selection randomness is seeded by ``eval_seed``
    alone, so repeats differ only in their start.
    """
    episodes = protocol.episodes if episodes is None else episodes
    if episodes < 1:
        raise InvalidArgument("need at least one evaluation episode")
    if protocol.kind == "random-start":
        if reference is None:
            if not protocol.reference:
                raise ConfigError("random-start evaluation needs a reference trajectory")
            reference = EpisodeLog.from_csv(protocol.reference)
        game_seed = reference.seed
    world = make_world(cfg, game_seed)
    start_rng = np.random.default_rng([eval_seed, 13])
    scores, steps, levels, deaths, starts = [], [], [], [], []
    for _ in range(episodes):
        world.reset(game_seed)
        rng = np.random.default_rng([eval_seed, 17])
        if protocol.kind == "fixed-start":
            n = int(start_rng.integers(0, protocol.max_noops + 1))
            res = play_game(world, copy.deepcopy(agent), rng, True, cfg.env.step_cap, noops=n)
        else:
            n = int(start_rng.integers(0, reference.steps + 1))
            res = play_game(world, copy.deepcopy(agent), rng, True, cfg.env.step_cap,
                            prefix=reference.actions[:n])
        starts.append(n)
        scores.append(res.score)
        steps.append(res.steps)
        levels.append(res.levels_completed)
        deaths.append(res.deaths)
    return {"protocol": protocol.kind, "mean": float(np.mean(scores)), "min": int(min(scores)),
            "max": int(max(scores)), "scores": scores, "steps": steps, "levels": levels,
            "deaths": deaths, "starts": starts}
