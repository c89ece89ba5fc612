"""Training and evaluation on the fruit grid.

Behaviour during training is uniformly random; after every training episode
the learned values are run greedily on a fresh episode and the number of steps
to clear the board is recorded.  Six methods share this loop:

* ``dqn`` / ``dqn+1``: shared-trunk net, one loss on the summed output.
* ``hra`` / ``hra+1``: same net, one loss per head (reward component).
* ``hra+2``: one table per fruit slot, learned while that fruit is present,
  treating eating it as terminal.
* ``hra+3``: one location GVF per slot learned from every movement; a head
  copies its GVF while the slot holds a fruit and reads zero otherwise.

The ``+1`` variants let each head see only the agent position and its own slot bit.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..envs.fruit import DEFAULT_SLOTS, FruitGrid
from ..errors import InvalidArgument
from ..gvf import GvfBank
from ..heads import MAX_RULE, MULTI_HEAD, SINGLE_HEAD, SharedTrunkNet, TargetNetwork
from ..oracle import value_iteration
from .config import FRUIT_METHODS, ExperimentConfig
from .metrics import MetricsLog


def active_inputs(env: FruitGrid) -> np.ndarray:
    """Indices of the ones in the full-110 feature vector."""
    return np.concatenate(([env.agent_cell], env.n_cells + np.flatnonzero(env.active)))


def _continuation(values: np.ndarray, rule: str) -> np.ndarray:
    return values.max(axis=-1) if rule == MAX_RULE else values.mean(axis=-1)


class NetworkFruitAgent:
    """dqn, dqn+1, hra, hra+1."""

    def __init__(self, env: FruitGrid, method: str, rule: str, gamma: float, step_size: float,
                 hidden: int = 250, sync_period: int = 1, seed: int = 0, replay_size: int = 0,
                 batch_size: int = 32, update_every: int = 1):
        head_inputs = env.reduced_input_indices() if method.endswith("+1") else None
        self.net = SharedTrunkNet(env.n_cells + env.n_slots, hidden, env.n_slots, env.n_actions,
                                  head_inputs, seed)
        self.target = TargetNetwork(self.net, sync_period)
        self.mode = MULTI_HEAD if method.startswith("hra") else SINGLE_HEAD
        self.rule, self.gamma, self.step_size = rule, gamma, step_size
        self.n_inputs = env.n_cells + env.n_slots
        self.replay = None
        if replay_size:
            self.replay = _Replay(replay_size, self.n_inputs, env.n_slots, np.random.default_rng([seed, 3]))
            self.batch_size = batch_size
            self.update_every = update_every
            self._since_update = 0

    def q_values(self, env: FruitGrid) -> np.ndarray:
        return self.net.forward_binary(active_inputs(env))[1]

    def learn(self, x, t, x_next) -> None:
        if self.replay is not None:
            self.replay.add(x, t, x_next)
            self._since_update += 1
            if len(self.replay) >= self.batch_size and self._since_update >= self.update_every:
                self._since_update = 0
                self._learn_batch(*self.replay.sample(self.batch_size))
            return
        heads_next, total_next = self.target.net.forward_binary(x_next)
        live = 0.0 if (t.terminal and not t.info["truncated"]) else 1.0
        if self.mode == MULTI_HEAD:
            y = np.asarray(t.r_components, float) + live * self.gamma * _continuation(heads_next, self.rule)
        else:
            y = t.r_env + live * self.gamma * float(_continuation(total_next, self.rule))
        self.net.update_binary(x, t.a, y, self.mode, self.step_size)
        self.target.step()


    def _learn_batch(self, X, A, R, live, X_next) -> None:
        heads_next, total_next = self.target.net.forward(X_next)
        if self.mode == MULTI_HEAD:
            y = R + (live * self.gamma)[:, None] * _continuation(heads_next, self.rule)
        else:
            y = R.sum(axis=1) + live * self.gamma * _continuation(total_next, self.rule)
        self.net.update(X, A, y, self.mode, self.step_size / len(A))
        self.target.step()


class _Replay:
    """FIFO transition store with dense 0/1 feature rows."""

    def __init__(self, size: int, n_inputs: int, n_heads: int, rng: np.random.Generator):
        self.X = np.zeros((size, n_inputs))
        self.X_next = np.zeros((size, n_inputs))
        self.A = np.zeros(size, dtype=np.int64)
        self.R = np.zeros((size, n_heads))
        self.live = np.zeros(size)
        self.size, self.n, self.pos, self.rng = size, 0, 0, rng

    def add(self, on, t, on_next) -> None:
        i = self.pos
        self.X[i] = 0.0
        self.X[i, on] = 1.0
        self.X_next[i] = 0.0
        self.X_next[i, on_next] = 1.0
        self.A[i] = t.a
        self.R[i] = t.r_components
        self.live[i] = 0.0 if (t.terminal and not t.info["truncated"]) else 1.0
        self.pos = (i + 1) % self.size
        self.n = min(self.n + 1, self.size)

    def __len__(self) -> int:
        return self.n

    def sample(self, k: int):
        idx = self.rng.integers(self.n, size=k)
        return self.X[idx], self.A[idx], self.R[idx], self.live[idx], self.X_next[idx]


class TabularFruitAgent:
    """hra+2 (per-slot tables) and hra+3 (per-slot location GVFs)."""

    def __init__(self, env: FruitGrid, method: str, rule: str, gamma: float, step_size: float):
        self.method = method
        self.rule, self.gamma, self.alpha = rule, gamma, step_size
        self.slot_cells = env.slot_cells
        if method == "hra+3":
            self.bank = GvfBank(env.n_actions, gamma, rule, step_size)
            self.bank.register(0, {(c // env.width, c % env.width): c for c in range(env.n_cells)},
                               np.arange(env.n_cells))
            for c in self.slot_cells:
                self.bank.ensure_cell(0, int(c))
        else:
            self.tables = np.zeros((env.n_slots, env.n_cells, env.n_actions))

    def _head_tables(self) -> np.ndarray:
        if self.method == "hra+3":
            return self.bank.table(0)[self.slot_cells]
        return self.tables

    def q_values(self, env: FruitGrid) -> np.ndarray:
        return self._head_tables()[env.active, env.agent_cell].sum(axis=0)

    def learn(self, x, t, x_next, active_before: np.ndarray, cell: int, cell_next: int) -> None:
        if self.method == "hra+3":
            self.bank.update_all(0, cell, t.a, cell_next)
            return
        # heads whose fruit was present before the move learn; eating ends them
        ks = np.flatnonzero(active_before)
        nxt = self.tables[ks, cell_next]
        eaten = np.asarray(t.r_components, float)[ks]
        y = np.where(eaten > 0, eaten, self.gamma * _continuation(nxt, self.rule))
        self.tables[ks, cell, t.a] += self.alpha * (y - self.tables[ks, cell, t.a])


def make_fruit_agent(env: FruitGrid, cfg: ExperimentConfig, seed: int):
    ag = cfg.agent
    if ag.method not in FRUIT_METHODS:
        raise InvalidArgument(f"unknown fruit method {ag.method!r}")
    if ag.tabular:
        return TabularFruitAgent(env, ag.method, ag.target_rule, ag.resolved_gamma, ag.resolved_step_size)
    return NetworkFruitAgent(env, ag.method, ag.target_rule, ag.resolved_gamma, ag.resolved_step_size,
                             ag.hidden, ag.sync_period, seed, ag.replay_size, ag.batch_size, ag.update_every)


def make_fruit_env(cfg: ExperimentConfig) -> FruitGrid:
    slots = cfg.env.fruit_slots or DEFAULT_SLOTS
    return FruitGrid(slots=slots, max_steps=cfg.env.step_cap)


def episode_seed(seed: int, episode: int, stream: int) -> int:
    """Independent per-episode reset seed; stream 0 trains, stream 1 evaluates."""
    return int(np.random.SeedSequence([seed, episode, stream]).generate_state(1)[0])


@lru_cache(maxsize=512)
def _optimal_table(slots: tuple, active: tuple) -> np.ndarray:
    env = FruitGrid(slots=slots)
    mdp = env.joint_mdp(active, reward="step-cost")
    return -value_iteration(mdp, 1.0).max(axis=1)


def optimal_steps(env: FruitGrid) -> int:
    """Fewest steps that clear the board from the current state (value iteration)."""
    active = tuple(int(k) for k in np.flatnonzero(env.active))
    if not active:
        return 0
    return int(round(_optimal_table(env.slots, active)[env.joint_index(active)]))


def train_one_episode(env: FruitGrid, agent, rng: np.random.Generator, reset_seed: int):
    env.reset(reset_seed)
    x = active_inputs(env)
    score = steps = 0
    while not env.done:
        active_before, cell = env.active.copy(), env.agent_cell
        t = env.step(int(rng.integers(env.n_actions)))
        x_next = active_inputs(env)
        if isinstance(agent, TabularFruitAgent):
            agent.learn(x, t, x_next, active_before, cell, env.agent_cell)
        else:
            agent.learn(x, t, x_next)
        x = x_next
        score += t.r_env
        steps += 1
    return score, steps


def greedy_episode(env: FruitGrid, agent, reset_seed: int):
    """Greedy run (lowest index on ties).  Returns (fruits eaten, steps, optimal steps)."""
    env.reset(reset_seed)
    best = optimal_steps(env)
    score = steps = 0
    while not env.done:
        t = env.step(int(np.argmax(agent.q_values(env))))
        score += t.r_env
        steps += 1
    return score, steps, best


@dataclass
class FruitResult:
    log: MetricsLog
    agent: object


def train_fruit(cfg: ExperimentConfig, seed: int, episodes: Optional[int] = None,
                log_path=None) -> FruitResult:
    """Train one seed; one metrics row per episode."""
    if cfg.env.kind != "fruit":
        raise InvalidArgument("train_fruit needs a fruit environment config")
    episodes = cfg.episodes if episodes is None else episodes
    env, eval_env = make_fruit_env(cfg), make_fruit_env(cfg)
    agent = make_fruit_agent(env, cfg, seed)
    rng = np.random.default_rng([seed, 2])
    log = MetricsLog(log_path)
    t0 = time.perf_counter()
    for ep in range(episodes):
        score, steps = train_one_episode(env, agent, rng, episode_seed(seed, ep, 0))
        row = dict(episode=ep, train_score=score, train_steps=steps)
        if (ep + 1) % cfg.eval.eval_every == 0 or ep == episodes - 1:
            e_score, e_steps, best = greedy_episode(eval_env, agent, episode_seed(seed, ep, 1))
            row.update(eval_score=e_score, eval_steps=e_steps, optimal_steps=best)
        row["wall_time"] = time.perf_counter() - t0
        log.append(row)
    log.close()
    return FruitResult(log, agent)
