"""Desk-scale Pac-Man-style maze world.

The world mirrors the object/point/level structure of the arcade game at a
scale where tabular location values are cheap: four ASCII maps picked by a
level schedule, pellets and power pellets, a bonus fruit twice per level, four
ghosts that chase (or flee while blue), three lives.

Everything random is drawn from a generator re-seeded at the start of every
level from ``(game_seed, level)``.  Given the same game seed and the same
action sequence inside a level, the level plays out identically, which is what
makes replaying a memorised level possible.
"""
from __future__ import annotations

import copy
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..errors import InvalidArgument, InvalidState, ParseError
from ..mdp import DecomposedTransition
from ..oracle import EnumeratedMdp

N, E, S, W, NOOP = range(5)
DIRECTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))
REVERSE = (S, W, N, E)
ACTION_NAMES = ("N", "E", "S", "W", "noop")
LEGEND = {"#": "wall", ".": "pellet", "o": "power", "P": "player", "G": "ghost-house",
          "F": "fruit", " ": "empty"}

FRUITS = ("cherry", "strawberry", "orange", "pretzel", "apple", "pear", "banana")
MAP_NAMES = ("A", "B", "C", "D")

# event tags
PELLET = "pellet-eaten"
POWER = "power-pellet-eaten"
FRUIT = "fruit-eaten"
BLUE_GHOST = "blue-ghost-eaten"
GHOST_CONTACT = "ghost-contact"
LIFE_LOST = "life-lost"
GAME_OVER = "game-over"
LEVEL_COMPLETE = "level-complete"
FRUIT_SPAWNED = "fruit-spawned"
INACTIVE = "inactive"

GHOST_SHAPING = -1000


@dataclass(frozen=True)
class PointsTable:
    pellet: int = 10
    power_pellet: int = 50
    blue_ghost_chain: tuple = (200, 400, 800, 1600)
    fruit_values: dict = field(default_factory=lambda: {
        "cherry": 100, "strawberry": 200, "orange": 500, "pretzel": 700,
        "apple": 1000, "pear": 2000, "banana": 5000})


POINTS = PointsTable()


class Maze:
    """Parsed map: walls, object cells and the player's movement model.

    Walkable cells are indexed 0..n_cells-1 in row-major order.  A player
    state is ``cell * 4 + orientation``; ``next_state[s, a]`` gives the
    player's successor for the five actions (no-op keeps moving along the
    current orientation when possible).
    """

    def __init__(self, text: str, name: str = "map"):
        self.name = name
        lines = text.split("\n")
        while lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise ParseError("empty map")
        width = len(lines[0])
        for i, line in enumerate(lines):
            if len(line) != width:
                raise ParseError(f"non-rectangular map: row has {len(line)} columns, expected {width}",
                                 line=i + 1)
            for j, ch in enumerate(line):
                if ch not in LEGEND:
                    raise ParseError(f"unknown glyph {ch!r}", line=i + 1, column=j + 1)
        self.rows = lines
        self.height, self.width = len(lines), width
        grid = np.array([list(line) for line in lines])
        self.walkable = (grid != "#") & (grid != "G")
        coords = [tuple(map(int, rc)) for rc in np.argwhere(self.walkable)]
        self.cells = coords
        self.index = {rc: i for i, rc in enumerate(coords)}
        self.n_cells = len(coords)
        self.n_states = 4 * self.n_cells

        def cells_of(ch):
            return [tuple(map(int, rc)) for rc in np.argwhere(grid == ch)]

        players = cells_of("P")
        if len(players) != 1:
            raise ParseError(f"map needs exactly one player spawn 'P', found {len(players)}")
        self.player_spawn = self.index[players[0]]
        fruits = cells_of("F")
        self.fruit_spawn = self.index[fruits[0]] if fruits else self.player_spawn
        self.pellets = frozenset(self.index[rc] for rc in cells_of("."))
        self.power = frozenset(self.index[rc] for rc in cells_of("o"))
        self.ghost_house = cells_of("G")

        self.move = np.zeros((self.n_cells, 4), dtype=np.int64)
        for i, (r, c) in enumerate(coords):
            for d, (dr, dc) in enumerate(DIRECTIONS):
                j = self.index.get((r + dr, c + dc))
                self.move[i, d] = i if j is None else j

        reach = self._bfs(self.player_spawn)
        for cell in sorted(self.pellets | self.power):
            if reach[cell] < 0:
                r, c = coords[cell]
                raise ParseError("unreachable pellet", line=r + 1, column=c + 1)
        self.reachable = reach >= 0

        self.ghost_door = None
        if self.ghost_house:
            doors = [self.index[(r + dr, c + dc)] for r, c in self.ghost_house
                     for dr, dc in DIRECTIONS if (r + dr, c + dc) in self.index]
            doors = [d for d in doors if self.reachable[d]]
            if not doors:
                raise ParseError("ghost house has no reachable door")
            self.ghost_door = min(doors)
        self.dist = np.stack([self._bfs(i) for i in range(self.n_cells)])

        ns = np.zeros((self.n_states, 5), dtype=np.int64)
        for cell in range(self.n_cells):
            for o in range(4):
                for a in range(5):
                    d = o if a == NOOP else a
                    nxt = self.move[cell, d]
                    ns[cell * 4 + o, a] = nxt * 4 + d if nxt != cell else cell * 4 + o
        self.next_state = ns

    def _bfs(self, start: int) -> np.ndarray:
        dist = np.full(self.n_cells, -1, dtype=np.int64)
        dist[start] = 0
        q = deque([start])
        while q:
            u = q.popleft()
            for v in self.move[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    q.append(v)
        return dist

    def is_walkable(self, rc) -> bool:
        return tuple(rc) in self.index

    def cell_of_state(self, s: int) -> int:
        return s // 4

    def target_mdp(self, target_cell: int) -> EnumeratedMdp:
        """Player-only MDP for reaching ``target_cell``: entering it pays 1 and terminates."""
        S = self.n_states
        nxt = self.next_state[:, :, None].copy()
        R = (nxt // 4 == target_cell).astype(float)[None]
        terminal = np.arange(S) // 4 == target_cell
        return EnumeratedMdp(nxt, np.ones((S, 5, 1)), R, terminal)


def maze_load(map_text: str, name: str = "map") -> Maze:
    return Maze(map_text, name)


@lru_cache(maxsize=None)
def _bundled_text(name: str) -> str:
    return resources.files("hra.envs").joinpath("maps", f"map_{name}.txt").read_text()


def bundled_maps() -> list:
    return [Maze(_bundled_text(n), n) for n in MAP_NAMES]


def load_maps(paths: Optional[Sequence] = None) -> list:
    if not paths:
        return bundled_maps()
    return [Maze(Path(p).read_text(), Path(p).stem) for p in paths]


def map_for_level(level: int, n_maps: int = 4) -> int:
    """Level -> map index: 1-2 A, 3-4 B, 5-6 C, 7 D, then alternating C (even) and D (odd)."""
    if level < 1:
        raise InvalidArgument("levels start at 1")
    if n_maps < 4:
        return min((level - 1) // 2, n_maps - 1) if n_maps > 1 else 0
    if level <= 6:
        return (level - 1) // 2
    if level == 7:
        return 3
    return 2 if level % 2 == 0 else 3


def fruit_for_level(level: int, rng: np.random.Generator) -> str:
    if level <= len(FRUITS):
        return FRUITS[level - 1]
    return FRUITS[int(rng.integers(len(FRUITS)))]


@dataclass
class Ghost:
    cell: Optional[int]  # None while inside the ghost house
    direction: int = N
    blue_timer: int = 0
    release_timer: int = 0

    @property
    def blue(self) -> bool:
        return self.blue_timer > 0


class MazeWorld:
    """The playable game.  Actions: N, E, S, W, no-op.

    Reward components, in order: pellets, power pellets, fruit, one per
    normal ghost (carrying the -1000 contact shaping), one per blue ghost.
    """

    n_actions = 5

    def __init__(self, maps: Optional[Sequence[Maze]] = None, lives: int = 3, n_ghosts: int = 4,
                 blue_duration: int = 40, fruit_duration: int = 60, start_delay: int = 40,
                 ghost_release: Sequence[int] = (30, 45, 60, 75), chase_prob: float = 0.8,
                 ghost_speed: float = 0.67, game_seed: int = 0, points: PointsTable = POINTS):
        if not 0.0 < ghost_speed <= 1.0:
            raise InvalidArgument("ghost_speed must lie in (0, 1]")
        self.maps = list(maps) if maps else bundled_maps()
        self.start_lives = lives
        self.n_ghosts = n_ghosts
        self.blue_duration = blue_duration
        self.fruit_duration = fruit_duration
        self.start_delay = start_delay
        self.ghost_release = tuple(ghost_release)
        self.chase_prob = chase_prob
        self.ghost_speed = ghost_speed
        self.game_seed = game_seed
        self.points = points
        self.component_names = (["pellet", "power_pellet", "fruit"]
                                + [f"ghost{i}" for i in range(n_ghosts)]
                                + [f"blue_ghost{i}" for i in range(n_ghosts)])
        self.lives = 0
        self.level = 1

    # -- lifecycle ----------------------------------------------------------
    def reset(self, seed: Optional[int] = None) -> int:
        if seed is not None:
            self.game_seed = seed
        self.lives = self.start_lives
        self.score = 0
        self.shaping_total = 0
        self.levels_completed = 0
        self.deaths = 0
        self.steps = 0
        self.delay_left = self.start_delay
        self._start_level(1)
        return self.state_id()

    def _start_level(self, level: int) -> None:
        self.level = level
        self.map_id = map_for_level(level, len(self.maps))
        self.maze = self.maps[self.map_id]
        self.rng = np.random.default_rng([self.game_seed, level])
        self.pellets = set(self.maze.pellets)
        self.power = set(self.maze.power)
        self.initial_pellets = len(self.pellets) + len(self.power)
        self.fruit = None  # (cell, type, timer)
        self.fruit_spawns = 0
        self.fruit_type = fruit_for_level(level, self.rng)
        self.level_step = 0
        self._reset_positions()

    def _reset_positions(self) -> None:
        self.player = self.maze.player_spawn
        self.orient = W
        self.blue_chain = 0
        n_house = len(self.maze.ghost_house)
        count = self.n_ghosts if n_house else 0
        self.ghosts = [Ghost(None, N, 0, self.ghost_release[i % len(self.ghost_release)])
                       for i in range(count)]

    @property
    def done(self) -> bool:
        return self.lives <= 0

    @property
    def active(self) -> bool:
        return self.delay_left == 0

    @property
    def player_state(self) -> int:
        return self.player * 4 + self.orient

    def state_id(self) -> int:
        return self.player_state

    def pellets_remaining(self) -> int:
        return len(self.pellets) + len(self.power)

    def ghost_cells(self) -> list:
        return [(g.cell, g.blue) for g in self.ghosts]

    def get_state(self) -> dict:
        keys = ("lives", "score", "shaping_total", "levels_completed", "deaths", "steps",
                "delay_left", "level", "map_id", "rng", "pellets", "power", "initial_pellets",
                "fruit", "fruit_spawns", "fruit_type", "level_step", "player", "orient",
                "blue_chain", "ghosts", "game_seed")
        return copy.deepcopy({k: getattr(self, k) for k in keys})

    def set_state(self, state: dict) -> None:
        for k, v in copy.deepcopy(state).items():
            setattr(self, k, v)
        self.maze = self.maps[self.map_id]

    def render(self) -> str:
        """ASCII frame: walls, pellets, fruit 'F', ghosts 'M' (blue 'b'), player '@'."""
        maze = self.maze
        grid = [[ch if ch in "#G" else " " for ch in row] for row in maze.rows]
        for cell in self.pellets:
            r, c = maze.cells[cell]
            grid[r][c] = "."
        for cell in self.power:
            r, c = maze.cells[cell]
            grid[r][c] = "o"
        if self.fruit is not None:
            r, c = maze.cells[self.fruit[0]]
            grid[r][c] = "F"
        for g in self.ghosts:
            if g.cell is not None:
                r, c = maze.cells[g.cell]
                grid[r][c] = "b" if g.blue else "M"
        r, c = maze.cells[self.player]
        grid[r][c] = "@"
        return "\n".join("".join(row) for row in grid)

    # -- dynamics -----------------------------------------------------------
    def step(self, a: int) -> DecomposedTransition:
        if self.lives <= 0:
            raise InvalidState("no lives left; call reset()")
        if not 0 <= a < 5:
            raise InvalidArgument(f"action {a} not in N/E/S/W/no-op")
        s = self.player_state
        info = {"map": self.map_id, "level": self.level, "level_step": self.level_step}
        n_comp = len(self.component_names)
        if self.delay_left > 0:
            self.delay_left -= 1
            self.steps += 1
            return DecomposedTransition(s, a, s, 0, (0,) * n_comp, False, (INACTIVE,), info=info)

        maze = self.maze
        comps = [0] * n_comp
        events = []
        reward = shaping = 0
        self.steps += 1
        self.level_step += 1

        # movement
        prev_player = self.player
        d = self.orient if a == NOOP else a
        nxt = int(maze.move[self.player, d])
        if nxt != self.player:
            self.player, self.orient = nxt, d
        s_moved = self.player_state
        prev_ghosts = [g.cell for g in self.ghosts]
        if self._ghosts_move():
            for g in self.ghosts:
                self._move_ghost(g)

        # collisions
        died = False
        for i, g in enumerate(self.ghosts):
            if g.cell is None:
                continue
            hit = g.cell == self.player or (g.cell == prev_player and prev_ghosts[i] == self.player)
            if not hit:
                continue
            if g.blue:
                pts = self.points.blue_ghost_chain[min(self.blue_chain, 3)]
                self.blue_chain = min(self.blue_chain + 1, 4)
                comps[3 + self.n_ghosts + i] += pts
                reward += pts
                events.append(BLUE_GHOST)
                g.cell, g.blue_timer = None, 0
                g.release_timer = self.ghost_release[-1] if self.ghost_release else 0
            else:
                comps[3 + i] += GHOST_SHAPING
                shaping += GHOST_SHAPING
                events += [GHOST_CONTACT, LIFE_LOST]
                died = True
                break

        if died:
            self.lives -= 1
            self.deaths += 1
            if self.lives <= 0:
                events.append(GAME_OVER)
            else:
                self._reset_positions()
        else:
            cell = self.player
            if cell in self.pellets:
                self.pellets.discard(cell)
                comps[0] += self.points.pellet
                reward += self.points.pellet
                events.append(PELLET)
            elif cell in self.power:
                self.power.discard(cell)
                comps[1] += self.points.power_pellet
                reward += self.points.power_pellet
                events.append(POWER)
                for g in self.ghosts:
                    g.blue_timer = self.blue_duration + 1  # ticks down below this step
                self.blue_chain = 0
            if self.fruit is not None and self.fruit[0] == cell:
                pts = self.points.fruit_values[self.fruit[1]]
                comps[2] += pts
                reward += pts
                events.append(FRUIT)
                self.fruit = None

        # timers
        if self.ghosts:
            for g in self.ghosts:
                if g.blue_timer > 0:
                    g.blue_timer -= 1
            if not any(g.blue for g in self.ghosts):
                self.blue_chain = 0
        if self.fruit is not None:
            c, kind, timer = self.fruit
            self.fruit = (c, kind, timer - 1) if timer > 1 else None
        remaining = self.pellets_remaining()
        thresholds = (0.75 * self.initial_pellets, 0.25 * self.initial_pellets)
        if (self.fruit_spawns < 2 and remaining > 0
                and remaining <= thresholds[self.fruit_spawns]):
            self.fruit = (self.maze.fruit_spawn, self.fruit_type, self.fruit_duration)
            self.fruit_spawns += 1
            events.append(FRUIT_SPAWNED)

        self.score += reward
        self.shaping_total += shaping
        if remaining == 0 and not self.done:
            events.append(LEVEL_COMPLETE)
            self.levels_completed += 1
            info["level_complete"] = True
            self._start_level(self.level + 1)
        info["died"] = died
        return DecomposedTransition(s, a, s_moved, reward, tuple(comps), self.done, tuple(events),
                                    shaping, info)

    def _ghosts_move(self) -> bool:
        # deterministic pattern: ghosts move on a ghost_speed fraction of level steps
        k = self.level_step
        return int(k * self.ghost_speed) != int((k - 1) * self.ghost_speed)

    def _move_ghost(self, g: Ghost) -> None:
        maze = self.maze
        if g.cell is None:
            if g.release_timer > 0:
                g.release_timer -= 1
                return
            g.cell, g.direction = maze.ghost_door, N
            return
        options = [d for d in range(4) if maze.move[g.cell, d] != g.cell]
        if not options:
            return
        forward = [d for d in options if d != REVERSE[g.direction]] or options
        if len(forward) == 1:
            d = forward[0]
        elif self.rng.random() < self.chase_prob:
            pr, pc = maze.cells[self.player]
            dists = []
            for d in forward:
                r, c = maze.cells[maze.move[g.cell, d]]
                dists.append(abs(r - pr) + abs(c - pc))
            pick = int(np.argmax(dists)) if g.blue else int(np.argmin(dists))
            d = forward[pick]
        else:
            d = forward[int(self.rng.integers(len(forward)))]
        g.cell, g.direction = int(maze.move[g.cell, d]), d
