"""HRA control agent for the maze world.

Every object on the board gets a head whose action values are the pseudo
Q-values of the GVF at the object's cell, scaled by a per-kind multiplier.
The heads are combined by an aggregator, three exploration heads are added
(diversification, count-based bonus, executive memory) and the agent takes the
argmax of the sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .envs import maze as mz
from .errors import InvalidArgument
from .gvf import GvfBank
from .heads import MEAN_RULE

LINEAR_SUM = "linear-sum"
NORMALIZED = "normalized"

PELLET, POWER_PELLET, FRUIT, GHOST, BLUE_GHOST = "pellet", "power-pellet", "fruit", "ghost", "blue-ghost"
MULTIPLIERS = {PELLET: 10.0, POWER_PELLET: 50.0, FRUIT: 200.0, BLUE_GHOST: 1000.0}
DEFAULT_GHOST_WEIGHT = {LINEAR_SUM: -1000.0, NORMALIZED: -10.0}
FORCE = 1e6


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = NORMALIZED
    ghost_weight: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (LINEAR_SUM, NORMALIZED):
            raise InvalidArgument(f"unknown aggregator {self.kind!r}")
        if self.ghost_weight is None:
            object.__setattr__(self, "ghost_weight", DEFAULT_GHOST_WEIGHT[self.kind])


@dataclass
class HeadValues:
    """Rows of per-object action values plus the kind of each row."""

    values: np.ndarray
    kinds: list

    @property
    def ghost_mask(self) -> np.ndarray:
        return np.array([k == GHOST for k in self.kinds], dtype=bool)


def aggregate(values, spec: AggregatorSpec, ghost_mask=None) -> np.ndarray:
    """Combine a (heads x actions) matrix into one value per action.

    Linear-sum: column sums.  Normalized: the column sums of the score rows are
    min-max scaled to [0, 1] (a constant vector maps to zeros), then the ghost
    rows' column sums are added.  Ghost rows arrive already multiplied by the
    ghost weight.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] == 0:
        raise InvalidArgument("aggregate needs a non-empty heads x actions matrix")
    if spec.kind == LINEAR_SUM:
        return values.sum(axis=0)
    if ghost_mask is None:
        ghost_mask = np.zeros(values.shape[0], dtype=bool)
    ghost_mask = np.asarray(ghost_mask, dtype=bool)
    score = values[~ghost_mask].sum(axis=0)
    return normalize(score) + values[ghost_mask].sum(axis=0)


def normalize(v: np.ndarray) -> np.ndarray:
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def diversification_values(t: int, rng: np.random.Generator, n_actions: int = 5,
                           window: int = 50, high: float = 20.0) -> np.ndarray:
    """U(0, high) per action while ``t < window``, zeros afterwards."""
    if t < window:
        return rng.uniform(0.0, high, size=n_actions)
    return np.zeros(n_actions)


class ExplorationState:
    """Visit counts for the count-based bonus kappa * sqrt(N**(1/4) / n(s, a)).

    Counts start at 1 so the bonus is finite on a first visit; ``total`` is
    the number of actions actually taken.
    """

    def __init__(self, n_actions: int = 5, kappa: float = 1.0):
        if kappa < 0:
            raise InvalidArgument("kappa must be non-negative")
        self.n_actions = n_actions
        self.kappa = kappa
        self.counts: dict = {}
        self.total = 0

    def row(self, s) -> np.ndarray:
        c = self.counts.get(s)
        return np.ones(self.n_actions) if c is None else c

    def record(self, s, a: int) -> None:
        c = self.counts.get(s)
        if c is None:
            c = self.counts[s] = np.ones(self.n_actions)
        c[a] += 1
        self.total += 1

    def bonus(self, s) -> np.ndarray:
        return exploration_bonus(self, s, self.n_actions)


def exploration_bonus(es: ExplorationState, s, action_count: int) -> np.ndarray:
    n = es.row(s)[:action_count]
    return es.kappa * np.sqrt(es.total ** 0.25 / n)


class ExecutiveMemory:
    """Action sequences that cleared a level without losing a life.

    While a level is being played the actions go into a buffer; a death
    discards the buffer for the rest of that level, and clearing the level
    commits it (first commit wins).  On replay, the action recorded for
    (level, step index) is forced with a value of :data:`FORCE`.
    """

    def __init__(self):
        self.recorded: dict = {}
        self.buffer: list = []
        self.buffer_level: Optional[int] = None
        self.tainted = False
        self.active = True

    def start_level(self, level: int) -> None:
        self.buffer = []
        self.buffer_level = level
        self.tainted = False

    def record(self, level: int, step_index: int, a: int) -> None:
        if level != self.buffer_level or step_index != len(self.buffer):
            # joined mid-level: nothing here can be replayed from the level start
            self.buffer_level, self.buffer, self.tainted = level, [], True
            return
        self.buffer.append(int(a))

    def on_death(self) -> None:
        self.buffer = []
        self.tainted = True

    def on_level_complete(self, level: int) -> bool:
        committed = False
        if level == self.buffer_level and not self.tainted and level not in self.recorded:
            self.recorded[level] = list(self.buffer)
            committed = True
        self.start_level(level + 1)
        return committed

    def step(self, level: int, step_index: int, action_count: int) -> np.ndarray:
        return memory_step(self, level, step_index, action_count)


def memory_step(mem: ExecutiveMemory, level: int, step_index: int, action_count: int) -> np.ndarray:
    out = np.zeros(action_count)
    seq = mem.recorded.get(level) if mem.active else None
    if seq is not None and 0 <= step_index < len(seq):
        out[seq[step_index]] = FORCE
    return out


def select_action(aggregated, diversification, bonus, memory_forcing) -> int:
    """Argmax of the elementwise sum of the four vectors; ties go to the lowest index."""
    vecs = [np.asarray(v, dtype=float) for v in (aggregated, diversification, bonus, memory_forcing)]
    if len({v.shape for v in vecs}) != 1:
        raise InvalidArgument("all head vectors must have the same length")
    return int(np.argmax(vecs[0] + vecs[1] + vecs[2] + vecs[3]))


@dataclass
class AgentSettings:
    aggregator: str = NORMALIZED
    ghost_weight: Optional[float] = None
    gamma_score: float = 0.99
    gamma_ghosts: float = 0.99
    gvf_rule: str = MEAN_RULE
    diversification: bool = True
    div_window: int = 50
    div_high: float = 20.0
    count_bonus: bool = True
    kappa: float = 1.0
    memory: bool = False


class HraAgent:
    """Full maze agent.  Learning happens only through :meth:`learn`."""

    n_actions = 5

    def __init__(self, settings: Optional[AgentSettings] = None, maps=None):
        self.settings = settings = settings or AgentSettings()
        self.spec = AggregatorSpec(settings.aggregator, settings.ghost_weight)
        self.score_bank = GvfBank(self.n_actions, settings.gamma_score, settings.gvf_rule)
        if settings.gamma_ghosts == settings.gamma_score:
            self.ghost_bank = self.score_bank
        else:
            self.ghost_bank = GvfBank(self.n_actions, settings.gamma_ghosts, settings.gvf_rule)
        self.exploration = ExplorationState(self.n_actions, settings.kappa)
        self.memory = ExecutiveMemory()
        self.memory.active = settings.memory
        self.pellet_heads: set = set()
        if maps is not None:
            for i, m in enumerate(maps):
                self.register_map(i, m)

    @property
    def banks(self) -> list:
        return [self.score_bank] if self.ghost_bank is self.score_bank else [self.score_bank, self.ghost_bank]

    def register_map(self, map_id: int, maze) -> None:
        for b in self.banks:
            b.register_maze(map_id, maze)

    @property
    def gvf_count(self) -> int:
        return len(self.score_bank)

    @property
    def head_count(self) -> int:
        return len(self.pellet_heads)

    # -- heads --------------------------------------------------------------
    def head_values(self, world) -> HeadValues:
        map_id, s = world.map_id, world.player_state
        if not self.score_bank.has_space(map_id):
            self.register_map(map_id, world.maze)
        rows, kinds = [], []
        for kind, cells in ((PELLET, world.pellets), (POWER_PELLET, world.power)):
            if cells:
                cells = sorted(cells)
                rows.append(self.score_bank.values(map_id, cells, s) * MULTIPLIERS[kind])
                kinds += [kind] * len(cells)
        if world.fruit is not None:
            rows.append(self.score_bank.values(map_id, [world.fruit[0]], s) * MULTIPLIERS[FRUIT])
            kinds.append(FRUIT)
        for g in world.ghosts:
            if g.cell is None:
                continue
            if g.blue:
                rows.append(self.score_bank.values(map_id, [g.cell], s) * MULTIPLIERS[BLUE_GHOST])
                kinds.append(BLUE_GHOST)
            else:
                rows.append(self.ghost_bank.values(map_id, [g.cell], s) * self.spec.ghost_weight)
                kinds.append(GHOST)
        if not rows:
            return HeadValues(np.zeros((0, self.n_actions)), [])
        return HeadValues(np.vstack(rows), kinds)

    def aggregated(self, world) -> np.ndarray:
        hv = self.head_values(world)
        if not hv.kinds:
            return np.zeros(self.n_actions)
        return aggregate(hv.values, self.spec, hv.ghost_mask)

    # -- acting -------------------------------------------------------------
    def act(self, world, t: int, rng: np.random.Generator) -> int:
        """Greedy action for the current world state; ``t`` counts active steps this episode.

        Reads only: acting never changes banks, counts or memory.
        """
        st = self.settings
        agg = self.aggregated(world)
        div = (diversification_values(t, rng, self.n_actions, st.div_window, st.div_high)
               if st.diversification else np.zeros(self.n_actions))
        key = (world.map_id, world.player_state)
        bonus = self.exploration.bonus(key) if st.count_bonus else np.zeros(self.n_actions)
        mem = self.memory.step(world.level, world.level_step, self.n_actions)
        return select_action(agg, div, bonus, mem)

    # -- learning -----------------------------------------------------------
    def begin_episode(self, world) -> None:
        self.memory.start_level(world.level)
        self.discover(world)

    def discover(self, world) -> None:
        map_id = world.map_id
        if not self.score_bank.has_space(map_id):
            self.register_map(map_id, world.maze)
        for b in self.banks:
            b.ensure_cell(map_id, world.player)
        self._note_pellet(map_id, world.player, world)

    def _note_pellet(self, map_id, cell, world) -> None:
        maze = world.maps[map_id]
        if cell in maze.pellets or cell in maze.power:
            self.pellet_heads.add((map_id, cell))

    def learn(self, t, world) -> None:
        """Update GVFs, visit counts and memory from one world transition."""
        if mz.INACTIVE in t.events:
            return
        map_id = t.info["map"]
        cell_next = t.s_next // 4
        for b in self.banks:
            b.ensure_cell(map_id, cell_next)
            b.update_all(map_id, t.s, t.a, t.s_next)
        self._note_pellet(map_id, cell_next, world)
        self.exploration.record((map_id, t.s), t.a)
        self.memory.record(t.info["level"], t.info["level_step"], t.a)
        if t.info.get("died"):
            self.memory.on_death()
        if t.info.get("level_complete"):
            self.memory.on_level_complete(t.info["level"])
        if t.info.get("died") or t.info.get("level_complete"):
            self.discover(world)
