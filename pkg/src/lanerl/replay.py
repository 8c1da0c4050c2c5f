"""Proportional prioritized replay backed by an array sum tree."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

ALPHA = 0.6
P_FLOOR = 1e-3


class SumTree:
    """Binary tree over ``capacity`` leaves (rounded up to a power of two).

    ``tree[1]`` is the root; leaf ``i`` lives at ``tree[size + i]``.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        size = 1
        while size < self.capacity:
            size *= 2
        self.size = size
        self.tree = np.zeros(2 * size)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def __getitem__(self, i):
        return self.tree[self.size + np.asarray(i)]

    def leaves(self) -> np.ndarray:
        return self.tree[self.size:self.size + self.capacity]

    def set(self, i: int, value: float):
        if not 0 <= i < self.capacity:
            raise IndexError(i)
        if value < 0:
            raise ValueError("priorities must be non-negative")
        node = self.size + i
        self.tree[node] = value
        node //= 2
        while node >= 1:
            # recompute from children rather than adding deltas, so rounding
            # errors cannot accumulate along a path
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1]
            node //= 2

    def find(self, mass):
        """Leaf index whose cumulative-sum interval contains ``mass``.

        Vectorized over an array of query masses. Leaf i owns the half-open
        interval [cumsum(i-1), cumsum(i)).
        """
        mass = np.atleast_1d(np.asarray(mass, dtype=np.float64)).copy()
        node = np.ones(mass.shape, dtype=np.int64)
        while node[0] < self.size:
            left = 2 * node
            left_sum = self.tree[left]
            go_right = (mass >= left_sum) & (self.tree[left + 1] > 0)
            mass = np.where(go_right, mass - left_sum, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.size

    def max_leaf(self, count=None) -> float:
        leaves = self.leaves() if count is None else self.tree[self.size:self.size + count]
        return float(leaves.max()) if leaves.size else 0.0


@dataclass
class Batch:
    indices: np.ndarray
    stamps: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return len(self.indices)


class PrioritizedReplay:
    """FIFO ring buffer of transitions with p**alpha proportional sampling.

    States are stored as the uint8 code tensors produced by the simulator.
    ``alpha = 0`` gives uniform replay.
    """

    def __init__(self, capacity: int, state_shape, alpha: float = ALPHA, p_floor: float = P_FLOOR):
        self.capacity = int(capacity)
        self.state_shape = tuple(state_shape)
        self.alpha = float(alpha)
        self.p_floor = float(p_floor)
        self.tree = SumTree(self.capacity)
        self.priorities = np.zeros(self.capacity)
        self.states = np.zeros((self.capacity,) + self.state_shape, dtype=np.uint8)
        self.next_states = np.zeros_like(self.states)
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.terminals = np.zeros(self.capacity, dtype=bool)
        self.stamps = np.full(self.capacity, -1, dtype=np.int64)
        self.cursor = 0
        self.pushes = 0
        self.stale_updates = 0

    def __len__(self):
        return min(self.pushes, self.capacity)

    def push(self, state, action, reward, next_state, terminal) -> int:
        i = self.cursor
        live = len(self)
        p = float(self.priorities[:live].max()) if live else 1.0
        if live == self.capacity:
            # slot i holds the oldest entry; its priority must not feed the max
            others = np.delete(self.priorities, i) if self.capacity > 1 else np.zeros(0)
            p = float(others.max()) if others.size else 1.0
        self.states[i] = state
        self.next_states[i] = next_state
        self.actions[i] = action
        self.rewards[i] = reward
        self.terminals[i] = terminal
        self.stamps[i] = self.pushes
        self._set_priority(i, p)
        self.cursor = (i + 1) % self.capacity
        self.pushes += 1
        return i

    def _set_priority(self, i, p):
        self.priorities[i] = p
        self.tree.set(i, p ** self.alpha)

    def probabilities(self) -> np.ndarray:
        live = len(self)
        w = self.priorities[:live] ** self.alpha
        return w / w.sum()

    def sample(self, k: int, rng) -> Batch:
        live = len(self)
        if k > live or k < 1:
            raise ValueError(f"cannot sample {k} from {live} transitions")
        total = self.tree.total
        edges = np.arange(k) * (total / k)
        mass = edges + rng.random(k) * (total / k)
        idx = self.tree.find(np.minimum(mass, np.nextafter(total, 0)))
        idx = np.minimum(idx, live - 1)
        return Batch(idx, self.stamps[idx].copy(), self.states[idx], self.actions[idx],
                     self.rewards[idx], self.next_states[idx], self.terminals[idx])

    def update_priorities(self, indices, td_errors, stamps=None) -> int:
        """Set p = |delta| + p_floor. Entries overwritten since sampling
        (stamp mismatch) are skipped; returns how many were skipped."""
        skipped = 0
        for n, (i, d) in enumerate(zip(np.asarray(indices), np.asarray(td_errors, dtype=float))):
            i = int(i)
            if i >= len(self) or (stamps is not None and self.stamps[i] != stamps[n]):
                skipped += 1
                continue
            self._set_priority(i, abs(d) + self.p_floor)
        self.stale_updates += skipped
        return skipped

    # snapshot: numpy .npz archive, one array per field plus a header array

    def save(self, path):
        header = np.array([1, self.capacity, self.cursor, self.pushes], dtype=np.int64)
        np.savez(Path(path), header=header, alpha=self.alpha, p_floor=self.p_floor,
                 state_shape=np.array(self.state_shape), priorities=self.priorities,
                 states=self.states, next_states=self.next_states, actions=self.actions,
                 rewards=self.rewards, terminals=self.terminals, stamps=self.stamps)

    @classmethod
    def load(cls, path) -> "PrioritizedReplay":
        with np.load(Path(path)) as data:
            version, capacity, cursor, pushes = (int(v) for v in data["header"])
            if version != 1:
                raise ValueError(f"unsupported buffer snapshot version {version}")
            buf = cls(capacity, tuple(data["state_shape"]), float(data["alpha"]), float(data["p_floor"]))
            for name in ("priorities", "states", "next_states", "actions", "rewards",
                         "terminals", "stamps"):
                getattr(buf, name)[...] = data[name]
        buf.cursor, buf.pushes = cursor, pushes
        for i in range(min(pushes, capacity)):
            buf.tree.set(i, buf.priorities[i] ** buf.alpha)
        return buf
