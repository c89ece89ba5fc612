"""Exact solvers for small enumerable MDPs.

These are the ground truth the learned heads are checked against: exact
policy evaluation by a sparse linear solve, the same evaluation by fixed-point
iteration, value iteration, and the check that per-component random-policy
values add up to the whole-reward random-policy values.

Transitions are stored as successor lists (``next_states``/``probs`` of shape
``(S, A, K)``) so deterministic environments with thousands of states stay
cheap; a dense ``P[s, a, s']`` is the special case ``K == S``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, NoFixedPointError
from .mdp import PolicySpec


@dataclass
class EnumeratedMdp:
    next_states: np.ndarray  # (S, A, K) int
    probs: np.ndarray  # (S, A, K)
    rewards: np.ndarray  # (n, S, A, K) component rewards
    terminal: np.ndarray  # (S,) bool

    def __post_init__(self):
        self.next_states = np.asarray(self.next_states, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        if self.rewards.ndim == 3:
            self.rewards = self.rewards[None]
        S, A, K = self.next_states.shape
        if self.probs.shape != (S, A, K) or self.rewards.shape[1:] != (S, A, K):
            raise InvalidArgument("successor, probability and reward arrays disagree in shape")
        if self.terminal.shape != (S,):
            raise InvalidArgument("terminal flags must have one entry per state")
        if self.next_states.min() < 0 or self.next_states.max() >= S:
            raise InvalidArgument("successor index out of range")
        row_sums = self.probs.sum(axis=2)[~self.terminal]
        if row_sums.size and np.abs(row_sums - 1.0).max() > 1e-12:
            raise InvalidArgument("transition rows of non-terminal states must sum to 1")

    @classmethod
    def from_dense(cls, P, R, terminal=None) -> "EnumeratedMdp":
        """Build from ``P[s, a, s']`` and ``R[k, s, a, s']`` (or a single ``R[s, a, s']``)."""
        P = np.asarray(P, dtype=float)
        S, A, _ = P.shape
        nxt = np.broadcast_to(np.arange(S), (S, A, S)).copy()
        if terminal is None:
            terminal = np.zeros(S, dtype=bool)
        return cls(nxt, P, R, terminal)

    @property
    def n_states(self) -> int:
        return self.next_states.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_states.shape[1]

    @property
    def n_components(self) -> int:
        return self.rewards.shape[0]

    @property
    def env_rewards(self) -> np.ndarray:
        return self.rewards.sum(axis=0)

    def dense_P(self) -> np.ndarray:
        S, A, K = self.next_states.shape
        P = np.zeros((S, A, S))
        s_idx, a_idx, _ = np.indices((S, A, K))
        np.add.at(P, (s_idx, a_idx, self.next_states), self.probs)
        return P

    def reward_for(self, component: Optional[int]) -> np.ndarray:
        if component is None:
            return self.env_rewards
        if not 0 <= component < self.n_components:
            raise InvalidArgument(f"component {component} out of range")
        return self.rewards[component]


def _check_gamma(gamma):
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgument(f"gamma must lie in [0, 1], got {gamma}")


def backup(mdp: EnumeratedMdp, reward: np.ndarray, V: np.ndarray, gamma: float) -> np.ndarray:
    """Q(s, a) = sum_s' P(s'|s, a) [r(s, a, s') + gamma V(s')], with V = 0 on terminal states."""
    V = np.where(mdp.terminal, 0.0, V)
    return (mdp.probs * (reward + gamma * V[mdp.next_states])).sum(axis=2)


def policy_matrix(mdp: EnumeratedMdp, policy: Union[PolicySpec, np.ndarray, str],
                  Q: Optional[np.ndarray] = None) -> np.ndarray:
    """pi[s, a] for a PolicySpec (greedy kinds need ``Q``) or pass-through for an array."""
    if isinstance(policy, str):
        policy = PolicySpec(kind=policy)
    if isinstance(policy, PolicySpec):
        if not policy.needs_values:
            return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
        if Q is None:
            raise InvalidArgument("greedy policies need action values")
        return np.stack([policy.probabilities(q) for q in Q])
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidArgument("policy matrix has the wrong shape")
    return pi


def _policy_system(mdp, pi, reward, gamma):
    S, A, K = mdp.next_states.shape
    w = pi[:, :, None] * mdp.probs  # (S, A, K)
    live = ~mdp.terminal
    w_live = w * live[mdp.next_states]
    rows = np.broadcast_to(np.arange(S)[:, None, None], (S, A, K)).ravel()
    P_pi = sp.csr_matrix((w_live.ravel(), (rows, mdp.next_states.ravel())), shape=(S, S))
    r_pi = (w * reward).sum(axis=(1, 2))
    return P_pi, r_pi


def policy_eval_exact(mdp: EnumeratedMdp, policy, gamma: float,
                      component: Optional[int] = None) -> np.ndarray:
    """Action values of ``policy`` by a sparse linear solve of the Bellman equations.

    The returned table satisfies the evaluation equations with a residual below
    1e-12 relative to max(1, |Q|).  ``component`` selects one reward component;
    ``None`` uses the whole environment reward.
    """
    _check_gamma(gamma)
    reward = mdp.reward_for(component)
    pi = policy_matrix(mdp, policy)
    P_pi, r_pi = _policy_system(mdp, pi, reward, gamma)
    A_mat = (sp.identity(mdp.n_states, format="csc") - gamma * P_pi).tocsc()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            lu = spla.splu(A_mat)
            V = lu.solve(r_pi)
            V = V + lu.solve(r_pi - A_mat @ V)  # one refinement step
        except (RuntimeError, spla.MatrixRankWarning, ZeroDivisionError) as exc:
            raise NoFixedPointError(f"evaluation system is singular: {exc}") from exc
    if not np.all(np.isfinite(V)):
        raise NoFixedPointError("evaluation system is singular")
    Q = backup(mdp, reward, V, gamma)
    resid = np.abs(Q - backup(mdp, reward, (pi * Q).sum(axis=1), gamma)).max()
    if resid > 1e-12 * max(1.0, np.abs(Q).max()):
        raise NoFixedPointError(f"Bellman residual {resid:.3g} too large; no unique fixed point")
    return Q


def policy_eval_iterative(mdp: EnumeratedMdp, policy, gamma: float, tol: float = 1e-13,
                          component: Optional[int] = None, max_iter: int = 1_000_000) -> np.ndarray:
    """Same quantity as :func:`policy_eval_exact`, by repeated Bellman backups."""
    _check_gamma(gamma)
    reward = mdp.reward_for(component)
    pi = policy_matrix(mdp, policy)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        Q_new = backup(mdp, reward, (pi * Q).sum(axis=1), gamma)
        if np.abs(Q_new - Q).max() < tol:
            return Q_new
        Q = Q_new
    raise NoFixedPointError("iterative evaluation did not converge")


def value_iteration(mdp: EnumeratedMdp, gamma: float, tol: float = 1e-10,
                    component: Optional[int] = None, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal action values; the returned table has sup-norm Bellman residual < tol."""
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    _check_gamma(gamma)
    reward = mdp.reward_for(component)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iter):
        Q_new = backup(mdp, reward, Q.max(axis=1), gamma)
        if np.abs(Q_new - Q).max() < tol:
            # residual of Q_new is at most gamma * |Q_new - Q|
            return Q_new
        Q = Q_new
    raise NoFixedPointError("value iteration did not converge")


def greedy_policy(Q: np.ndarray) -> np.ndarray:
    return np.argmax(Q, axis=1)


def verify_upsilon_identity(mdp: EnumeratedMdp, gamma: float) -> float:
    """max |sum_k Q_k^rand - Q_env^rand| under the uniformly random policy."""
    q_env = policy_eval_exact(mdp, "uniform-random", gamma)
    if mdp.n_components == 1:
        return 0.0
    q_sum = sum(policy_eval_exact(mdp, "uniform-random", gamma, component=k)
                for k in range(mdp.n_components))
    return float(np.abs(q_sum - q_env).max())


def verify_optimal_identity(mdp: EnumeratedMdp, gamma: float, tol: float = 1e-12):
    """Compare sum_k Q*_k with Q*_env.

    Returns ``(deviation, disagreeing_states)`` where the second item lists the
    non-terminal states whose greedy actions differ.
    """
    q_env = value_iteration(mdp, gamma, tol)
    q_sum = sum(value_iteration(mdp, gamma, tol, component=k) for k in range(mdp.n_components))
    dev = float(np.abs(q_sum - q_env).max())
    differ = np.flatnonzero((greedy_policy(q_sum) != greedy_policy(q_env)) & ~mdp.terminal)
    return dev, differ.tolist()


def random_mdp(seed: int, n_states: int = 10, n_actions: int = 3, n_components: int = 2) -> EnumeratedMdp:
    """Seeded dense random MDP with rewards in [-1, 1] split across components.

    Each (s, a, s') reward is drawn uniformly; the first n-1 components take
    random shares and the last takes the remainder.
    """
    if not (1 <= n_states <= 20 and 1 <= n_actions <= 4 and 1 <= n_components <= 5):
        raise InvalidArgument("random MDPs are limited to S<=20, A<=4, n<=5")
    rng = np.random.default_rng(seed)
    S, A, n = n_states, n_actions, n_components
    P = rng.gamma(1.0, size=(S, A, S))
    P /= P.sum(axis=2, keepdims=True)
    total = rng.uniform(-1.0, 1.0, size=(S, A, S))
    shares = rng.dirichlet(np.ones(n), size=(S, A, S)).transpose(3, 0, 1, 2)
    R = total * shares
    R[-1] = total - R[:-1].sum(axis=0)
    return EnumeratedMdp.from_dense(P, R)


def inconsistent_mdp() -> EnumeratedMdp:
    """Two-component MDP where the sum of per-component optima misleads.

    From the start state, action 0 leads to a state where the agent must pick
    *either* component's unit reward; action 1 leads to a state paying 0.7 to
    each component.  Per-component optimal values count both unit rewards at
    once, so their sum prefers action 0 while the environment optimum is action 1.
    """
    S, A = 4, 2  # 0 start, 1 "choose", 2 "shared", 3 terminal
    P = np.zeros((S, A, S))
    R = np.zeros((2, S, A, S))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    P[1, :, 3] = P[2, :, 3] = P[3, :, 3] = 1.0
    R[0, 1, 0, 3] = 1.0
    R[1, 1, 1, 3] = 1.0
    R[:, 2, :, 3] = 0.7
    terminal = np.array([False, False, False, True])
    return EnumeratedMdp.from_dense(P, R, terminal)


def corridor_mdp(length: int, reward_cell: Optional[int] = None) -> EnumeratedMdp:
    """Deterministic 1-D corridor with actions left/right (walls clamp).

    Entering ``reward_cell`` (default: the right end) pays 1 and terminates.
    """
    if length < 2:
        raise InvalidArgument("corridor needs at least two cells")
    goal = length - 1 if reward_cell is None else reward_cell
    nxt = np.zeros((length, 2, 1), dtype=np.int64)
    R = np.zeros((1, length, 2, 1))
    for s in range(length):
        for a, d in enumerate((-1, 1)):
            s2 = min(max(s + d, 0), length - 1)
            nxt[s, a, 0] = s2
            R[0, s, a, 0] = 1.0 if s2 == goal else 0.0
    terminal = np.zeros(length, dtype=bool)
    terminal[goal] = True
    return EnumeratedMdp(nxt, np.ones((length, 2, 1)), R, terminal)


def shortest_tour_length(start, cells, distance=None) -> int:
    """Brute-force minimum number of moves to visit every cell in ``cells`` from ``start``.

    ``distance`` defaults to Manhattan distance (an open grid).
    """
    if distance is None:
        def distance(p, q):
            return abs(p[0] - q[0]) + abs(p[1] - q[1])
    cells = list(cells)
    if not cells:
        return 0
    best = None
    for order in itertools.permutations(cells):
        total, here = 0, start
        for c in order:
            total += distance(here, c)
            here = c
            if best is not None and total >= best:
                break
        else:
            best = total if best is None else min(best, total)
    return best
