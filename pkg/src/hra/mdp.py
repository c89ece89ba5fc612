"""Discrete-MDP plumbing shared by the environments, heads and harness.

States and actions are plain non-negative ints.  Environments follow a small
protocol (``reset``/``step``/``done``/``state_id``/``n_actions``) and emit
:class:`DecomposedTransition` records whose component rewards always add up to
the environment reward plus the recorded shaping amount.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence

import numpy as np

from .errors import InvalidArgument

UNIFORM_RANDOM = "uniform-random"
GREEDY = "greedy"
EPSILON_GREEDY = "epsilon-greedy"

LOWEST_INDEX = "lowest-index"
SEEDED_RANDOM = "seeded-random"


@dataclass(frozen=True)
class DecomposedTransition:
    """One environment step with its reward split into components.

    ``r_env`` is the unshaped game reward.  ``shaping`` is whatever was added
    before decomposition (e.g. the ghost-contact penalty), so
    ``sum(r_components) == r_env + shaping``.
    """

    s: int
    a: int
    s_next: int
    r_env: float
    r_components: tuple
    terminal: bool = False
    events: tuple = ()
    shaping: float = 0.0
    info: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.r_components)

    def decomposition_error(self) -> float:
        return float(sum(self.r_components) - self.shaping - self.r_env)


class Env(Protocol):
    n_actions: int

    def reset(self, seed: int) -> int: ...

    def step(self, a: int) -> DecomposedTransition: ...

    @property
    def done(self) -> bool: ...

    def state_id(self) -> int: ...


@dataclass(frozen=True)
class PolicySpec:
    kind: str = UNIFORM_RANDOM
    epsilon: float = 0.0
    tie_break: str = LOWEST_INDEX

    def __post_init__(self):
        if self.kind not in (UNIFORM_RANDOM, GREEDY, EPSILON_GREEDY):
            raise InvalidArgument(f"unknown policy kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidArgument(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.tie_break not in (LOWEST_INDEX, SEEDED_RANDOM):
            raise InvalidArgument(f"unknown tie-break rule {self.tie_break!r}")

    @property
    def needs_values(self) -> bool:
        return self.kind != UNIFORM_RANDOM

    def choose(self, n_actions: int, rng: np.random.Generator, values=None) -> int:
        if self.kind == UNIFORM_RANDOM:
            return int(rng.integers(n_actions))
        if self.kind == EPSILON_GREEDY and rng.random() < self.epsilon:
            return int(rng.integers(n_actions))
        return greedy_action(values, self.tie_break, rng)

    def probabilities(self, values=None, n_actions=None) -> np.ndarray:
        """Action-selection probabilities pi(s, .) for one state."""
        if self.kind == UNIFORM_RANDOM:
            return np.full(n_actions, 1.0 / n_actions)
        values = np.asarray(values, dtype=float)
        n = len(values)
        best = np.flatnonzero(values == values.max())
        p = np.zeros(n)
        if self.tie_break == LOWEST_INDEX:
            p[best[0]] = 1.0
        else:
            p[best] = 1.0 / len(best)
        if self.kind == EPSILON_GREEDY:
            p = (1.0 - self.epsilon) * p + self.epsilon / n
        return p


def greedy_action(values, tie_break: str = LOWEST_INDEX, rng: Optional[np.random.Generator] = None) -> int:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InvalidArgument("cannot act greedily over an empty value vector")
    if tie_break == LOWEST_INDEX:
        return int(np.argmax(values))
    best = np.flatnonzero(values == values.max())
    return int(rng.choice(best))


@dataclass
class EpisodeLog:
    transitions: list = field(default_factory=list)
    seed: int = 0
    component_names: Optional[Sequence[str]] = None

    @property
    def steps(self) -> int:
        return len(self.transitions)

    @property
    def total_score(self) -> float:
        return sum(t.r_env for t in self.transitions)

    @property
    def actions(self) -> list:
        return [t.a for t in self.transitions]

    def _names(self) -> list:
        if self.component_names is not None:
            return list(self.component_names)
        n = self.transitions[0].n_components if self.transitions else 0
        return [f"r{k}" for k in range(n)]

    def write_csv(self, fh) -> None:
        """Write one transition per line; the header names the component columns.

        The first line is a ``# seed=<n>`` comment so a log can be replayed.
        """
        names = self._names()
        fh.write(f"# seed={self.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "s", "a", "s_next", "r_env", "shaping", "terminal", "events", *names])
        for i, t in enumerate(self.transitions):
            if t.n_components != len(names):
                raise InvalidArgument(
                    f"transition {i} has {t.n_components} components, header has {len(names)}")
            w.writerow([i, t.s, t.a, t.s_next, _num(t.r_env), _num(t.shaping), int(t.terminal),
                        ";".join(t.events), *(_num(r) for r in t.r_components)])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "EpisodeLog":
        if isinstance(source, (str, Path)) and Path(source).exists():
            text = Path(source).read_text()
        else:
            text = str(source)
        lines = text.splitlines()
        seed = 0
        if lines and lines[0].startswith("# seed="):
            seed = int(lines[0].split("=", 1)[1])
            lines = lines[1:]
        rows = list(csv.reader(lines))
        header, body = rows[0], rows[1:]
        names = header[8:]
        transitions = []
        for row in body:
            events = tuple(e for e in row[7].split(";") if e)
            transitions.append(DecomposedTransition(
                s=int(row[1]), a=int(row[2]), s_next=int(row[3]),
                r_env=_parse_num(row[4]), shaping=_parse_num(row[5]),
                terminal=bool(int(row[6])), events=events,
                r_components=tuple(_parse_num(x) for x in row[8:]),
            ))
        return cls(transitions=transitions, seed=seed, component_names=names)


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _parse_num(s: str):
    v = float(s)
    return int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v


ValueSource = Callable[[Env, int], Sequence[float]]


def rollout(env: Env, policy: PolicySpec, value_source: Optional[ValueSource] = None,
            max_steps: int = 1000, seed: int = 0) -> EpisodeLog:
    """Run one episode and return its log.

    The env is reset with ``seed`` and the policy draws from a generator seeded
    with the same value, so identical inputs give identical logs.
    """
    if max_steps <= 0:
        raise InvalidArgument("max_steps must be positive")
    if policy.needs_values and value_source is None:
        raise InvalidArgument(f"policy {policy.kind!r} needs a value source")
    rng = np.random.default_rng(seed)
    s = env.reset(seed)
    log = EpisodeLog(seed=seed, component_names=getattr(env, "component_names", None))
    while not env.done and log.steps < max_steps:
        values = value_source(env, s) if policy.needs_values else None
        a = policy.choose(env.n_actions, rng, values)
        t = env.step(a)
        log.transitions.append(t)
        s = env.state_id()
        if t.terminal:
            break
    return log


def replay_states(env: Env, actions: Iterable[int], seed: int) -> list:
    """State ids visited when ``actions`` are replayed from ``env.reset(seed)``."""
    states = [env.reset(seed)]
    for a in actions:
        env.step(a)
        states.append(env.state_id())
    return states
