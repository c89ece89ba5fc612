"""Value heads and their TD targets.

Three representations live here:

* :class:`TabularHead` -- one table per reward component.
* :class:`SharedTrunkNet` -- input -> ReLU hidden layer -> ``n_heads`` groups of
  linear action outputs -> a fixed weight-1 layer summing the groups.  The
  single-head (DQN-style) loss enters at the summed outputs, the multi-head
  (HRA) loss at the per-head outputs.
* :class:`TargetNetwork` -- frozen copy of a net used for bootstrap targets.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .mdp import DecomposedTransition

MAX_RULE = "max"
MEAN_RULE = "mean"

SINGLE_HEAD = "single-head"
MULTI_HEAD = "multi-head"


@dataclass(frozen=True)
class TargetRule:
    kind: str = MAX_RULE
    gamma: float = 0.99

    def __post_init__(self):
        if self.kind not in (MAX_RULE, MEAN_RULE):
            raise InvalidArgument(f"unknown target rule {self.kind!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidArgument(f"gamma must lie in [0, 1], got {self.gamma}")

    def continuation(self, next_values) -> float:
        if self.kind == MAX_RULE:
            return float(np.max(next_values))
        return float(np.mean(next_values))


def td_target(rule: TargetRule, r_k: float, next_values: Sequence[float], terminal: bool) -> float:
    """One-step target: r_k on terminal transitions, else r_k + gamma * max/mean(next_values)."""
    if len(next_values) == 0:
        raise InvalidArgument("next_values must be non-empty")
    if terminal:
        return float(r_k)
    return float(r_k) + rule.gamma * rule.continuation(next_values)


class TabularHead:
    """Associative (state, action) -> value table; unvisited entries read 0."""

    def __init__(self, n_actions: int, alpha: float = 1.0, rule: Optional[TargetRule] = None):
        if not 0.0 < alpha <= 1.0:
            raise InvalidArgument(f"alpha must lie in (0, 1], got {alpha}")
        self.n_actions = n_actions
        self.alpha = alpha
        self.rule = rule or TargetRule()
        self.table: dict = {}

    def row(self, s: int) -> np.ndarray:
        r = self.table.get(s)
        return np.zeros(self.n_actions) if r is None else r.copy()

    def value(self, s: int, a: int) -> float:
        r = self.table.get(s)
        return 0.0 if r is None else float(r[a])

    def update(self, t: DecomposedTransition, k: int) -> float:
        return tabular_update(self, t, k)

    def __len__(self):
        return len(self.table)


def tabular_update(head: TabularHead, t: DecomposedTransition, k: int) -> float:
    """table[s, a] <- (1 - alpha) table[s, a] + alpha * target for component ``k``.

    Returns the new entry.  Terminal transitions never read the next row.
    """
    if not 0 <= k < t.n_components:
        raise InvalidArgument(f"component {k} out of range for {t.n_components} components")
    next_row = head.table.get(t.s_next) if not t.terminal else None
    if next_row is None:
        next_row = np.zeros(head.n_actions)
    y = td_target(head.rule, t.r_components[k], next_row, t.terminal)
    row = head.table.get(t.s)
    if row is None:
        row = head.table[t.s] = np.zeros(head.n_actions)
    row[t.a] = (1.0 - head.alpha) * row[t.a] + head.alpha * y
    return float(row[t.a])


class SharedTrunkNet:
    """Feed-forward net with a shared ReLU trunk and per-head linear outputs.

    ``head_inputs`` (optional, one index list per head) restricts each head to
    its own slice of the input: the hidden layer is split into ``n_heads``
    equal blocks, block k sees only ``head_inputs[k]`` and feeds only head k.
    This is the "irrelevant features removed" variant of the same network.

    Weights are uniform in +-1/sqrt(fan_in); biases start at zero.  The final
    aggregation layer is a constant matrix of ones and is never updated.
    """

    def __init__(self, input_size: int = 110, hidden: int = 250, n_heads: int = 10,
                 n_actions: int = 4, head_inputs: Optional[Sequence[Sequence[int]]] = None,
                 seed: int = 0):
        if hidden <= 0 or n_heads <= 0 or n_actions <= 0:
            raise InvalidArgument("layer sizes must be positive")
        self.input_size = input_size
        self.hidden = hidden
        self.n_heads = n_heads
        self.n_actions = n_actions
        rng = np.random.default_rng(seed)
        b1 = 1.0 / np.sqrt(input_size)
        self.W1 = rng.uniform(-b1, b1, size=(input_size, hidden))
        self.b1 = np.zeros(hidden)
        b2 = 1.0 / np.sqrt(hidden)
        self.W2 = rng.uniform(-b2, b2, size=(hidden, n_heads * n_actions))
        self.b2 = np.zeros(n_heads * n_actions)
        self.agg = np.tile(np.eye(n_actions), (n_heads, 1))  # fixed, weight 1
        self.agg.setflags(write=False)
        self.mask1 = self.mask2 = None
        if head_inputs is not None:
            self._set_head_inputs(head_inputs)

    def _set_head_inputs(self, head_inputs):
        if len(head_inputs) != self.n_heads:
            raise InvalidArgument("need one input list per head")
        if self.hidden % self.n_heads:
            raise InvalidArgument("hidden width must split evenly across heads")
        block = self.hidden // self.n_heads
        m1 = np.zeros((self.input_size, self.hidden))
        m2 = np.zeros((self.hidden, self.n_heads * self.n_actions))
        for k, idx in enumerate(head_inputs):
            cols = slice(k * block, (k + 1) * block)
            m1[np.asarray(idx, dtype=int), cols] = 1.0
            m2[cols, k * self.n_actions:(k + 1) * self.n_actions] = 1.0
            fan_in = max(len(idx), 1)
            bound = 1.0 / np.sqrt(fan_in)
            # re-scale the block initialisation to its real fan-in
            self.W1[:, cols] *= bound * np.sqrt(self.input_size)
            self.W2[cols, :] *= np.sqrt(self.hidden / block)
        self.mask1, self.mask2 = m1, m2
        self.W1 *= m1
        self.W2 *= m2

    # -- parameters ---------------------------------------------------------
    @property
    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "SharedTrunkNet":
        new = object.__new__(SharedTrunkNet)
        new.__dict__.update(self.__dict__)
        new.W1, new.b1, new.W2, new.b2 = (p.copy() for p in self.params)
        return new

    def set_params(self, other: "SharedTrunkNet") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    # -- forward / backward -------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_size:
            raise InvalidArgument(f"expected {self.input_size} features, got {x.shape[-1]}")
        return x

    def forward(self, features):
        """Return ``(head_values, summed_values)`` with shapes (n_heads, A) and (A,).

        A 2-D batch of features gives (B, n_heads, A) and (B, A).
        """
        x = self._check(features)
        h = np.maximum(self._pre(x)[0], 0.0)
        out = h @ self.W2 + self.b2
        total = out @ self.agg
        return out.reshape(*out.shape[:-1], self.n_heads, self.n_actions), total

    def q_sum(self, features) -> np.ndarray:
        return self.forward(features)[1]

    def loss(self, features, actions, targets, mode: str) -> float:
        x, actions, targets = self._batch(features, actions, targets, mode)
        heads, total = self.forward(x)
        rows = np.arange(len(actions))
        if mode == MULTI_HEAD:
            err = targets - heads[rows, :, actions]
        else:
            err = targets - total[rows, actions]
        return float((err ** 2).sum())

    def gradients(self, features, actions, targets, mode: str):
        """Analytic gradients of :meth:`loss` w.r.t. (W1, b1, W2, b2).

        ``targets`` has shape (B, n_heads) in multi-head mode and (B,) in
        single-head mode; only the taken action's outputs carry error.
        """
        x, actions, targets = self._batch(features, actions, targets, mode)
        pre = x @ self.W1 + self.b1
        h = np.maximum(pre, 0.0)
        d_out = self._output_error(h, actions, targets, mode)
        gW2 = h.T @ d_out
        gb2 = d_out.sum(axis=0)
        dh = (d_out @ self.W2.T) * (pre > 0)
        gW1 = x.T @ dh
        gb1 = dh.sum(axis=0)
        if self.mask1 is not None:
            gW1 *= self.mask1
            gW2 *= self.mask2
        return [gW1, gb1, gW2, gb2]

    def update(self, features, actions, targets, mode: str, step_size: float) -> None:
        """One plain gradient step on the squared error."""
        x, actions, targets = self._batch(features, actions, targets, mode)
        pre, cols = self._pre(x)
        h = np.maximum(pre, 0.0)
        d_out = self._output_error(h, actions, targets, mode)
        gW2 = h.T @ d_out
        dh = (d_out @ self.W2.T) * (pre > 0)
        # rows of W1 whose input is zero in the whole batch get no gradient
        gW1 = x[:, cols].T @ dh
        if self.mask1 is not None:
            gW1 *= self.mask1[cols]
            gW2 *= self.mask2
        self.W1[cols] -= step_size * gW1
        self.b1 -= step_size * dh.sum(axis=0)
        self.W2 -= step_size * gW2
        self.b2 -= step_size * d_out.sum(axis=0)

    def _pre(self, x):
        """Hidden pre-activations, skipping input columns that are zero everywhere."""
        cols = np.flatnonzero(np.any(x != 0, axis=tuple(range(x.ndim - 1))))
        return x[..., cols] @ self.W1[cols] + self.b1, cols

    def _output_error(self, h, actions, targets, mode):
        """d loss / d (head outputs), flattened to (B, n_heads * A)."""
        B = len(actions)
        out = (h @ self.W2 + self.b2).reshape(B, self.n_heads, self.n_actions)
        rows = np.arange(B)
        d_out = np.zeros_like(out)
        if mode == MULTI_HEAD:
            d_out[rows, :, actions] = -2.0 * (targets - out[rows, :, actions])
        else:
            total = out.sum(axis=1)
            # d total / d head output == 1 through the fixed aggregation layer
            d_out[rows, :, actions] = (-2.0 * (targets - total[rows, actions]))[:, None]
        return d_out.reshape(B, -1)

    # -- binary inputs ------------------------------------------------------
    # Same maths as forward/update for a single 0/1 feature vector given by the
    # indices of its ones; only the touched rows of W1 are read and written.
    def forward_binary(self, on):
        pre = self.W1[on].sum(axis=0) + self.b1
        h = np.maximum(pre, 0.0)
        out = h @ self.W2 + self.b2
        return out.reshape(self.n_heads, self.n_actions), out @ self.agg

    def update_binary(self, on, action: int, targets, mode: str, step_size: float) -> None:
        """Gradient step for a 0/1 input whose ones are at the distinct indices ``on``."""
        on = np.asarray(on, dtype=np.int64)
        pre = self.W1[on].sum(axis=0) + self.b1
        h = np.maximum(pre, 0.0)
        W2a = self.W2.reshape(self.hidden, self.n_heads, self.n_actions)[:, :, action]  # view
        b2a = self.b2.reshape(self.n_heads, self.n_actions)[:, action]
        out_a = h @ W2a + b2a
        if mode == MULTI_HEAD:
            d = -2.0 * (np.asarray(targets, dtype=float) - out_a)
        elif mode == SINGLE_HEAD:
            d = np.full(self.n_heads, -2.0 * (float(targets) - out_a.sum()))
        else:
            raise InvalidArgument(f"unknown update mode {mode!r}")
        dh = (W2a @ d) * (pre > 0)
        gW2 = np.outer(h, d)
        if self.mask2 is not None:
            gW2 *= self.mask2.reshape(self.hidden, self.n_heads, self.n_actions)[:, :, action]
        W2a -= step_size * gW2
        b2a -= step_size * d
        if self.mask1 is not None:
            self.W1[on] -= step_size * (dh * self.mask1[on])
        else:
            self.W1[on] -= step_size * dh
        self.b1 -= step_size * dh

    def _batch(self, features, actions, targets, mode):
        if mode not in (SINGLE_HEAD, MULTI_HEAD):
            raise InvalidArgument(f"unknown update mode {mode!r}")
        x = self._check(features)
        if x.ndim == 1:
            x = x[None]
        actions = np.atleast_1d(np.asarray(actions, dtype=int))
        targets = np.asarray(targets, dtype=float)
        B = x.shape[0]
        want = (B, self.n_heads) if mode == MULTI_HEAD else (B,)
        if targets.size != int(np.prod(want)):
            raise InvalidArgument(f"{mode} targets must have shape {want}, got {targets.shape}")
        if len(actions) != B:
            raise InvalidArgument("need one action per feature row")
        if actions.min() < 0 or actions.max() >= self.n_actions:
            raise InvalidArgument("action out of range")
        return x, actions, targets.reshape(want)

    # -- checkpoints --------------------------------------------------------
    def to_bytes(self) -> bytes:
        """Flat binary checkpoint.

        Layout, all little-endian: magic ``b"HRAN"``, uint32 version (1),
        uint32 input_size, hidden, n_heads, n_actions, uint32 has_mask, then
        float64 row-major W1, b1, W2, b2 and, when has_mask, mask1 and mask2.
        """
        has_mask = self.mask1 is not None
        head = b"HRAN" + struct.pack("<6I", 1, self.input_size, self.hidden, self.n_heads,
                                     self.n_actions, int(has_mask))
        arrays = self.params + ([self.mask1, self.mask2] if has_mask else [])
        return head + b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SharedTrunkNet":
        if data[:4] != b"HRAN":
            raise InvalidArgument("not a network checkpoint")
        version, n_in, hidden, n_heads, n_act, has_mask = struct.unpack_from("<6I", data, 4)
        if version != 1:
            raise InvalidArgument(f"unsupported checkpoint version {version}")
        net = cls(n_in, hidden, n_heads, n_act)
        off = 4 + 24
        shapes = [(n_in, hidden), (hidden,), (hidden, n_heads * n_act), (n_heads * n_act,)]
        if has_mask:
            shapes += [(n_in, hidden), (hidden, n_heads * n_act)]
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape))
            arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy())
            off += 8 * count
        net.W1, net.b1, net.W2, net.b2 = arrays[:4]
        if has_mask:
            net.mask1, net.mask2 = arrays[4:]
        return net

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SharedTrunkNet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class TargetNetwork:
    """Frozen copy of a live net, refreshed every ``period`` updates.

    ``period == 1`` refreshes after every update, i.e. no target network.
    """

    def __init__(self, live: SharedTrunkNet, period: int = 1):
        if period < 1:
            raise InvalidArgument("sync period must be >= 1")
        self.live = live
        self.period = period
        self.frozen = live.copy()
        self._since_sync = 0

    def sync(self) -> None:
        self.frozen.set_params(self.live)
        self._since_sync = 0

    def step(self) -> None:
        """Call once after each live update."""
        if self.period == 1:
            return
        self._since_sync += 1
        if self._since_sync >= self.period:
            self.sync()

    @property
    def net(self) -> SharedTrunkNet:
        """The net bootstrap targets are read from."""
        return self.live if self.period == 1 else self.frozen

    def forward(self, features):
        return self.net.forward(features)


def target_network_sync(target: TargetNetwork) -> TargetNetwork:
    target.sync()
    return target
