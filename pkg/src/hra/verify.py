"""Exact-oracle self checks behind ``hra verify``.

Each ``measure_*`` function returns the raw quantities; :func:`run_checks`
compares them with their thresholds and produces the pass/fail table.
"""
from __future__ import annotations

import time

import numpy as np

from .envs.maze import Maze
from .gvf import GvfBank
from .heads import MEAN_RULE, MULTI_HEAD, SINGLE_HEAD, SharedTrunkNet, TabularHead, TargetRule
from .mdp import DecomposedTransition
from .oracle import (corridor_mdp, inconsistent_mdp, policy_eval_exact, random_mdp,
                     verify_optimal_identity, verify_upsilon_identity)

MAZE_5X5 = "\n".join([
    "#####",
    "#P..#",
    "#.#.#",
    "#...#",
    "#####",
])

OPEN_5X5 = "\n".join([
    "P....",
    ".....",
    "..#..",
    ".....",
    ".....",
])


def measure_upsilon_identity(n_mdps: int = 50, gamma: float = 0.9, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(n_mdps):
        S, A, n = int(rng.integers(2, 21)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        worst = max(worst, verify_upsilon_identity(random_mdp(int(rng.integers(2**31)), S, A, n), gamma))
    return {"max_deviation": worst, "seconds": time.perf_counter() - t0}


def measure_inconsistency(gamma: float = 0.9) -> dict:
    t0 = time.perf_counter()
    dev, differ = verify_optimal_identity(inconsistent_mdp(), gamma)
    return {"sup_norm": dev, "differing_states": differ, "seconds": time.perf_counter() - t0}


def _sweep_tabular(mdp, gamma: float, tol: float = 1e-9, max_sweeps: int = 100_000) -> np.ndarray:
    """Repeated mean-rule alpha=1 sweeps over every (s, a) of a deterministic MDP."""
    head = TabularHead(mdp.n_actions, 1.0, TargetRule(MEAN_RULE, gamma))
    S, A = mdp.n_states, mdp.n_actions
    for _ in range(max_sweeps):
        change = 0.0
        for s in range(S):
            if mdp.terminal[s]:
                continue
            for a in range(A):
                s2 = int(mdp.next_states[s, a, 0])
                r = float(mdp.rewards[0, s, a, 0])
                t = DecomposedTransition(s, a, s2, r, (r,), bool(mdp.terminal[s2]))
                old = head.value(s, a)
                change = max(change, abs(head.update(t, 0) - old))
        if change < tol:
            break
    Q = np.zeros((S, A))
    for s in range(S):
        Q[s] = head.row(s)
    return Q


def _sweep_gvf(maze: Maze, gamma: float, tol: float = 1e-9, max_sweeps: int = 100_000) -> np.ndarray:
    """Sweep every GVF of the maze at once: one bank, one row per target cell."""
    bank = GvfBank(5, gamma, MEAN_RULE)
    bank.register_maze(0, maze)
    for c in range(maze.n_cells):
        bank.ensure_cell(0, c)
    q = bank.table(0)
    for _ in range(max_sweeps):
        before = q.copy()
        for s in range(maze.n_states):
            for a in range(5):
                bank.update_all(0, s, a, int(maze.next_state[s, a]))
        if np.abs(q - before).max() < tol:
            break
    return q


def measure_expected_sarsa(gamma: float = 0.9, gvf_gamma: float = 0.99) -> dict:
    t0 = time.perf_counter()
    worst, lo, hi = 0.0, np.inf, -np.inf
    for length in (3, 5, 8):
        mdp = corridor_mdp(length)
        live = ~mdp.terminal
        Q = _sweep_tabular(mdp, gamma)
        ref = policy_eval_exact(mdp, "uniform-random", gamma)
        worst = max(worst, float(np.abs(Q - ref)[live].max()))
    for text in (MAZE_5X5, OPEN_5X5):
        maze = Maze(text)
        tables = _sweep_gvf(maze, gvf_gamma)
        for target in range(maze.n_cells):
            q = tables[target]
            mdp = maze.target_mdp(target)
            ref = policy_eval_exact(mdp, "uniform-random", gvf_gamma)
            live = ~mdp.terminal
            worst = max(worst, float(np.abs(q - ref)[live].max()))
            lo, hi = min(lo, float(q.min())), max(hi, float(q.max()))
    return {"max_error": worst, "gvf_min": lo, "gvf_max": hi, "seconds": time.perf_counter() - t0}


def finite_difference_error(net: SharedTrunkNet, X, A, Y, mode: str, eps: float = 1e-6) -> float:
    """Largest relative error between analytic and central-difference gradients."""
    grads = net.gradients(X, A, Y, mode)
    worst = 0.0
    masks = [net.mask1, None, net.mask2, None]
    for p, g, m in zip(net.params, grads, masks):
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            keep = p[i]
            p[i] = keep + eps
            up = net.loss(X, A, Y, mode)
            p[i] = keep - eps
            down = net.loss(X, A, Y, mode)
            p[i] = keep
            num[i] = (up - down) / (2 * eps)
        if m is not None:
            num *= m  # masked weights are not parameters of the variant
        scale = max(np.abs(num).max(), np.abs(g).max(), 1e-8)
        worst = max(worst, float(np.abs(num - g).max() / scale))
    return worst


def measure_gradients(n_nets: int = 20, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    agg_ok = True
    for i in range(n_nets):
        n_in, hidden, heads, acts = (int(rng.integers(3, 9)), int(rng.integers(2, 5)) * 2,
                                     2, int(rng.integers(2, 5)))
        head_inputs = None
        if i % 2:
            head_inputs = [sorted(rng.choice(n_in, size=int(rng.integers(1, n_in + 1)), replace=False).tolist())
                           for _ in range(heads)]
        net = SharedTrunkNet(n_in, hidden, heads, acts, head_inputs, seed=int(rng.integers(2**31)))
        B = int(rng.integers(1, 5))
        X = rng.normal(size=(B, n_in))
        A = rng.integers(acts, size=B)
        mode = MULTI_HEAD if i % 4 < 2 else SINGLE_HEAD
        Y = rng.normal(size=(B, heads)) if mode == MULTI_HEAD else rng.normal(size=B)
        worst = max(worst, finite_difference_error(net, X, A, Y, mode))
        agg = net.agg.copy()
        net.update(X, A, Y, mode, 0.01)
        agg_ok &= agg.tobytes() == net.agg.tobytes()
    return {"max_relative_error": worst, "aggregation_unchanged": bool(agg_ok),
            "seconds": time.perf_counter() - t0}


def run_checks() -> list:
    """Rows of (check name, passed, detail)."""
    rows = []
    m = measure_upsilon_identity()
    rows.append(("random-policy identity (50 MDPs)",
                 m["max_deviation"] < 1e-8 and m["seconds"] < 10,
                 f"max deviation {m['max_deviation']:.2e}, {m['seconds']:.2f}s"))
    m = measure_inconsistency()
    rows.append(("optimal heads inconsistent", m["sup_norm"] > 0.1 and len(m["differing_states"]) >= 1
                 and m["seconds"] < 1,
                 f"sup-norm {m['sup_norm']:.3f}, greedy differs in {m['differing_states']}"))
    m = measure_expected_sarsa()
    rows.append(("mean-rule sweeps match oracle", m["max_error"] < 1e-6 and 0 <= m["gvf_min"]
                 and m["gvf_max"] <= 1 and m["seconds"] < 5,
                 f"max error {m['max_error']:.2e}, GVF range [{m['gvf_min']:.3f}, {m['gvf_max']:.3f}], "
                 f"{m['seconds']:.2f}s"))
    m = measure_gradients()
    rows.append(("gradients vs finite differences", m["max_relative_error"] < 1e-4
                 and m["aggregation_unchanged"] and m["seconds"] < 10,
                 f"max relative error {m['max_relative_error']:.2e}, aggregation fixed: "
                 f"{m['aggregation_unchanged']}, {m['seconds']:.2f}s"))
    return rows


__all__ = ["run_checks", "measure_upsilon_identity", "measure_inconsistency",
           "measure_expected_sarsa", "measure_gradients", "finite_difference_error"]
