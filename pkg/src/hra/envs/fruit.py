"""10x10 fruit-collection grid.

Five of ten fixed fruit slots hold a fruit at reset; the agent starts on a
random free cell and earns +1 per fruit.  The episode ends when every fruit is
eaten or after 300 steps.  The reward has one component per slot.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..errors import InvalidArgument, InvalidState
from ..mdp import DecomposedTransition
from ..oracle import EnumeratedMdp

DEFAULT_SLOTS = ((0, 2), (0, 7), (2, 0), (2, 9), (4, 4), (5, 5), (7, 0), (7, 9), (9, 2), (9, 7))
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W as (row, col) deltas

FULL = "full-110"
REDUCED = "per-head-reduced"
ONE_HOT = "one-hot-joint"
PROJECTIONS = (FULL, REDUCED, ONE_HOT)


class FruitGrid:
    n_actions = 4

    def __init__(self, width: int = 10, height: int = 10, slots: Sequence = DEFAULT_SLOTS,
                 n_fruits: int = 5, max_steps: int = 300):
        self.width, self.height = width, height
        self.slots = tuple(tuple(int(v) for v in s) for s in slots)
        for r, c in self.slots:
            if not (0 <= r < height and 0 <= c < width):
                raise InvalidArgument(f"fruit slot {(r, c)} lies outside the grid")
        if len(set(self.slots)) != len(self.slots):
            raise InvalidArgument("fruit slots must be distinct")
        if not 0 < n_fruits <= len(self.slots):
            raise InvalidArgument("n_fruits must be between 1 and the slot count")
        self.n_fruits = n_fruits
        self.max_steps = max_steps
        self.n_cells = width * height
        self.slot_cells = np.array([r * width + c for r, c in self.slots])
        self._slot_of_cell = {int(c): k for k, c in enumerate(self.slot_cells)}
        self._bit_values = 1 << np.arange(len(self.slots), dtype=np.int64)
        self.component_names = [f"fruit{k}" for k in range(len(self.slots))]
        self.agent_pos = (0, 0)
        self.active = np.zeros(len(self.slots), dtype=bool)
        self.step_count = 0
        self._done = True

    # -- state --------------------------------------------------------------
    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_states(self) -> int:
        return self.n_cells * (1 << self.n_slots)

    @property
    def agent_cell(self) -> int:
        return self.agent_pos[0] * self.width + self.agent_pos[1]

    @property
    def active_fruits(self) -> set:
        return {self.slots[k] for k in np.flatnonzero(self.active)}

    @property
    def fruit_mask(self) -> int:
        return int(self.active @ self._bit_values)

    @property
    def done(self) -> bool:
        return self._done

    def state_id(self) -> int:
        return self.agent_cell + self.n_cells * self.fruit_mask

    def reset(self, seed: int) -> int:
        """Place ``n_fruits`` fruits uniformly over the slots and the agent on a free cell."""
        rng = np.random.default_rng(seed)
        chosen = rng.choice(self.n_slots, size=self.n_fruits, replace=False)
        self.active = np.zeros(self.n_slots, dtype=bool)
        self.active[chosen] = True
        occupied = set(int(c) for c in self.slot_cells[self.active])
        while True:
            cell = int(rng.integers(self.n_cells))
            if cell not in occupied:
                break
        self.agent_pos = divmod(cell, self.width)
        self.step_count = 0
        self._done = False
        return self.state_id()

    def reset_to(self, agent_pos, active_slots) -> int:
        """Deterministic reset to an explicit configuration."""
        self.active = np.zeros(self.n_slots, dtype=bool)
        self.active[list(active_slots)] = True
        self.agent_pos = tuple(agent_pos)
        self.step_count = 0
        self._done = not self.active.any()
        return self.state_id()

    # -- dynamics -----------------------------------------------------------
    def _move(self, pos, a):
        dr, dc = MOVES[a]
        r, c = pos[0] + dr, pos[1] + dc
        if 0 <= r < self.height and 0 <= c < self.width:
            return (r, c)
        return pos

    def step(self, a: int) -> DecomposedTransition:
        if self._done:
            raise InvalidState("episode has ended; call reset()")
        if not 0 <= a < 4:
            raise InvalidArgument(f"action {a} not in N/E/S/W")
        s = self.state_id()
        self.agent_pos = self._move(self.agent_pos, a)
        self.step_count += 1
        comps = [0] * self.n_slots
        events = ()
        r = 0
        k = self._slot_of_cell.get(self.agent_cell)
        if k is not None and self.active[k]:
            self.active[k] = False
            comps[k] = 1
            r = 1
            events = ("fruit-eaten",)
        cleared = not self.active.any()
        self._done = cleared or self.step_count >= self.max_steps
        # truncated: the step cap ended the episode with fruit still on the board
        return DecomposedTransition(s, a, self.state_id(), r, tuple(comps), self._done, events,
                                    info={"slot": k if r else None,
                                          "truncated": self._done and not cleared})

    # -- features -----------------------------------------------------------
    def features(self, projection: str = FULL, head: Optional[int] = None) -> np.ndarray:
        """Binary encodings of the current state.

        ``full-110``: agent cell one-hot followed by one presence bit per slot.
        ``per-head-reduced``: agent cell one-hot plus the single bit of slot ``head``.
        ``one-hot-joint``: agent cell one-hot only (heads that know their own
        terminal states need nothing else).
        """
        if projection not in PROJECTIONS:
            raise InvalidArgument(f"unknown projection {projection!r}")
        if (head is not None) != (projection == REDUCED):
            raise InvalidArgument("head is required for, and only for, the reduced projection")
        if head is not None and not 0 <= head < self.n_slots:
            raise InvalidArgument(f"head index {head} out of range")
        pos = np.zeros(self.n_cells)
        pos[self.agent_cell] = 1.0
        if projection == ONE_HOT:
            return pos
        if projection == REDUCED:
            return np.concatenate([pos, [float(self.active[head])]])
        return np.concatenate([pos, self.active.astype(float)])

    def reduced_input_indices(self) -> list:
        """Per head, the indices of the full-110 vector that head may see."""
        pos = list(range(self.n_cells))
        return [pos + [self.n_cells + k] for k in range(self.n_slots)]

    # -- exact model --------------------------------------------------------
    def joint_mdp(self, active_slots, reward: str = "fruit") -> EnumeratedMdp:
        """Deterministic MDP over (agent cell x remaining subset of ``active_slots``).

        ``reward="fruit"`` gives the game reward split per slot (one component
        per slot); ``reward="step-cost"`` gives a single -1-per-step component,
        whose optimal values with gamma = 1 are minus the steps to finish.
        State index = cell + n_cells * subset_mask, with bit i of the mask
        meaning ``active_slots[i]`` still holds a fruit.  Subset 0 is terminal.
        """
        active_slots = list(active_slots)
        if reward not in ("fruit", "step-cost"):
            raise InvalidArgument(f"unknown joint reward {reward!r}")
        m = len(active_slots)
        n_sub = 1 << m
        S = self.n_cells * n_sub
        cells = np.arange(self.n_cells)
        rows, cols = cells // self.width, cells % self.width
        move = np.empty((self.n_cells, 4), dtype=np.int64)
        for a, (dr, dc) in enumerate(MOVES):
            r2, c2 = rows + dr, cols + dc
            ok = (r2 >= 0) & (r2 < self.height) & (c2 >= 0) & (c2 < self.width)
            move[:, a] = np.where(ok, r2 * self.width + c2, cells)
        # bit of the active slot sitting on each cell, -1 elsewhere
        bit_at = np.full(self.n_cells, -1)
        for i, k in enumerate(active_slots):
            bit_at[self.slot_cells[k]] = i
        masks = np.repeat(np.arange(n_sub), self.n_cells)        # per state
        dest = np.tile(move, (n_sub, 1))                           # (S, 4)
        bit = bit_at[dest]
        eaten = (bit >= 0) & ((masks[:, None] >> np.maximum(bit, 0)) & 1).astype(bool)
        new_mask = np.where(eaten, masks[:, None] & ~(1 << np.maximum(bit, 0)), masks[:, None])
        nxt = (dest + self.n_cells * new_mask)[:, :, None]
        if reward == "fruit":
            R = np.zeros((self.n_slots, S, 4, 1))
            slot_of_bit = np.asarray(active_slots, dtype=np.int64)
            s_idx, a_idx = np.nonzero(eaten)
            R[slot_of_bit[bit[s_idx, a_idx]], s_idx, a_idx, 0] = 1.0
        else:
            R = -np.ones((1, S, 4, 1))
        terminal = masks == 0
        return EnumeratedMdp(nxt, np.ones((S, 4, 1)), R, terminal)

    def joint_index(self, active_slots) -> int:
        """Index of the current state inside :meth:`joint_mdp` for ``active_slots``."""
        mask = sum(1 << i for i, k in enumerate(active_slots) if self.active[k])
        return self.agent_cell + self.n_cells * mask
