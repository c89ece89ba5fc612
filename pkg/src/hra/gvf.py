"""Bank of location GVFs.

A GVF predicts, for every (player state, action), the discounted chance of
reaching one target cell: pseudo-reward 1 on entering the target, which also
ends the pseudo-episode.  Tables are trained with alpha = 1 one-step
bootstrapping from every observed movement, and stay inside [0, 1].

Each map ("space") has its own dense array ``q[cell, state, action]``; a row
only counts as a GVF once it has been created, and only created rows learn.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .heads import MAX_RULE, MEAN_RULE, TargetRule


@dataclass(frozen=True)
class GvfKey:
    map_id: int
    target_cell: tuple


class _Space:
    def __init__(self, cell_index: dict, state_cell: np.ndarray, n_actions: int):
        self.cell_index = dict(cell_index)
        self.coords = {i: rc for rc, i in self.cell_index.items()}
        self.state_cell = np.asarray(state_cell, dtype=np.int64)
        self.n_cells = len(self.cell_index)
        self.n_states = len(self.state_cell)
        self.q = np.zeros((self.n_cells, self.n_states, n_actions))
        self.created = np.zeros(self.n_cells, dtype=bool)
        self.rows = np.zeros(0, dtype=np.int64)


class Gvf:
    """Handle onto one created GVF; ``table`` is a live view."""

    def __init__(self, bank: "GvfBank", key: GvfKey, row: int):
        self.bank, self.key, self.row = bank, key, row

    @property
    def table(self) -> np.ndarray:
        return self.bank._spaces[self.key.map_id].q[self.row]

    def value(self, s: int, a: int) -> float:
        return float(self.table[s, a])

    def __eq__(self, other):
        return isinstance(other, Gvf) and other.bank is self.bank and other.key == self.key

    def __hash__(self):
        return hash(self.key)


class GvfBank:
    def __init__(self, n_actions: int, gamma: float = 0.99, rule: str = MEAN_RULE, alpha: float = 1.0):
        if not 0.0 < alpha <= 1.0:
            raise InvalidArgument("alpha must lie in (0, 1]")
        if not 0.0 <= gamma < 1.0:
            raise InvalidArgument("GVF gamma must lie in [0, 1)")
        self.n_actions = n_actions
        self.rule = TargetRule(rule, gamma)
        self.alpha = alpha
        self._spaces: dict = {}
        self.created_order: list = []

    @property
    def gamma(self) -> float:
        return self.rule.gamma

    # -- spaces -------------------------------------------------------------
    def register(self, map_id: int, cell_index: dict, state_cell) -> None:
        """Declare a map: ``cell_index`` maps walkable (row, col) -> cell id,
        ``state_cell[s]`` gives the cell of player state ``s``."""
        if map_id not in self._spaces:
            self._spaces[map_id] = _Space(cell_index, state_cell, self.n_actions)

    def register_maze(self, map_id: int, maze) -> None:
        self.register(map_id, maze.index, np.arange(maze.n_states) // 4)

    def has_space(self, map_id: int) -> bool:
        return map_id in self._spaces

    def _space(self, map_id):
        try:
            return self._spaces[map_id]
        except KeyError:
            raise InvalidArgument(f"map {map_id} is not registered with the bank") from None

    # -- creation -----------------------------------------------------------
    def ensure(self, key: GvfKey) -> Gvf:
        """Return the GVF for ``key``, creating an all-zero one if needed."""
        sp = self._space(key.map_id)
        cell = sp.cell_index.get(tuple(key.target_cell))
        if cell is None:
            raise InvalidArgument(f"target {key.target_cell} is not a corridor cell of map {key.map_id}")
        self.ensure_cell(key.map_id, cell)
        return Gvf(self, GvfKey(key.map_id, tuple(key.target_cell)), cell)

    def ensure_cell(self, map_id: int, cell: int) -> bool:
        """Create the GVF targeting cell id ``cell``; returns True if it was new."""
        sp = self._spaces[map_id]
        if sp.created[cell]:
            return False
        sp.created[cell] = True
        sp.q[cell] = 0.0
        sp.rows = np.append(sp.rows, cell)
        self.created_order.append(GvfKey(map_id, sp.coords[cell]))
        return True

    def get(self, key: GvfKey) -> Optional[Gvf]:
        sp = self._spaces.get(key.map_id)
        if sp is None:
            return None
        cell = sp.cell_index.get(tuple(key.target_cell))
        if cell is None or not sp.created[cell]:
            return None
        return Gvf(self, key, cell)

    def __len__(self) -> int:
        return len(self.created_order)

    def __contains__(self, key: GvfKey) -> bool:
        return self.get(key) is not None

    def count(self, map_id: int) -> int:
        sp = self._spaces.get(map_id)
        return 0 if sp is None else int(sp.created.sum())

    def entry_count(self) -> int:
        """Stored table entries: sum over maps of created GVFs x states x actions."""
        return sum(int(sp.created.sum()) * sp.n_states * self.n_actions for sp in self._spaces.values())

    # -- learning -----------------------------------------------------------
    def update_all(self, map_id: int, s: int, a: int, s_next: int) -> None:
        """Apply one movement (s, a) -> s_next to every created GVF of the map."""
        sp = self._spaces[map_id]
        rows = sp.rows
        if rows.size == 0:
            return
        nxt = sp.q[rows, s_next]
        cont = nxt.max(axis=1) if self.rule.kind == MAX_RULE else nxt.sum(axis=1) / self.n_actions
        target = np.where(rows == sp.state_cell[s_next], 1.0, self.rule.gamma * cont)
        if self.alpha == 1.0:
            sp.q[rows, s, a] = target
        else:
            sp.q[rows, s, a] += self.alpha * (target - sp.q[rows, s, a])

    # -- reads --------------------------------------------------------------
    def value(self, key: GvfKey, s: int, a: int) -> float:
        g = self.get(key)
        return 0.0 if g is None else g.value(s, a)

    def values(self, map_id: int, cells, s: int) -> np.ndarray:
        """(len(cells), n_actions) values at state ``s``; missing GVFs read 0."""
        sp = self._spaces.get(map_id)
        cells = np.asarray(cells, dtype=np.int64)
        if sp is None or cells.size == 0:
            return np.zeros((cells.size, self.n_actions))
        # uncreated rows are never written, so they are still all-zero
        return sp.q[cells, s]

    def table(self, map_id: int) -> np.ndarray:
        return self._spaces[map_id].q

    # -- snapshots ----------------------------------------------------------
    def to_bytes(self) -> bytes:
        """Binary snapshot, little-endian.

        Header: magic ``b"HRAG"``, uint32 version (1), uint32 n_actions,
        float64 gamma, float64 alpha, uint8 rule (0 max, 1 mean), uint32 count.
        Then per GVF in creation order: int32 map_id, int32 row, int32 col,
        uint32 n_states, followed by the float64 row-major (n_states x n_actions) table.
        """
        out = [b"HRAG", struct.pack("<IIddBI", 1, self.n_actions, self.gamma, self.alpha,
                                    int(self.rule.kind == MEAN_RULE), len(self.created_order))]
        for key in self.created_order:
            sp = self._spaces[key.map_id]
            cell = sp.cell_index[key.target_cell]
            out.append(struct.pack("<iiiI", key.map_id, key.target_cell[0], key.target_cell[1], sp.n_states))
            out.append(np.ascontiguousarray(sp.q[cell], dtype="<f8").tobytes())
        return b"".join(out)

    def load_bytes(self, data: bytes) -> None:
        """Restore a snapshot into this bank (its maps must already be registered)."""
        if data[:4] != b"HRAG":
            raise InvalidArgument("not a GVF bank snapshot")
        version, n_actions, gamma, alpha, mean, count = struct.unpack_from("<IIddBI", data, 4)
        if version != 1 or n_actions != self.n_actions:
            raise InvalidArgument("snapshot does not match this bank")
        self.rule = TargetRule(MEAN_RULE if mean else MAX_RULE, gamma)
        self.alpha = alpha
        off = 4 + struct.calcsize("<IIddBI")
        for _ in range(count):
            map_id, r, c, n_states = struct.unpack_from("<iiiI", data, off)
            off += 16
            n = n_states * n_actions
            table = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(n_states, n_actions)
            off += 8 * n
            g = self.ensure(GvfKey(map_id, (r, c)))
            g.table[...] = table


def gvf_update_all(bank: GvfBank, map_id: int, s: int, a: int, s_next: int) -> GvfBank:
    bank.update_all(map_id, s, a, s_next)
    return bank


def gvf_value(bank: GvfBank, key: GvfKey, player_state: int, a: int) -> float:
    return bank.value(key, player_state, a)


def ensure_gvf(bank: GvfBank, key: GvfKey) -> Gvf:
    return bank.ensure(key)
