"""Transition storage with uniform with-replacement sampling.

Sampling draws independent uniform indices, so the training and
validation mini-batches of one iteration are independent draws that may
overlap by chance. Sampling never mutates stored transitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Batch:
    """Column-stacked view of a list of transitions."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray       # (N, 1)
    s_next: np.ndarray
    done: np.ndarray    # (N, 1) float mask, 1.0 where terminal

    def __len__(self) -> int:
        return self.s.shape[0]


def stack(transitions: list[Transition]) -> Batch:
    return Batch(
        s=np.stack([t.s for t in transitions]).astype(np.float64),
        a=np.stack([t.a for t in transitions]).astype(np.float64),
        r=np.array([[t.r] for t in transitions], dtype=np.float64),
        s_next=np.stack([t.s_next for t in transitions]).astype(np.float64),
        done=np.array([[1.0 if t.done else 0.0] for t in transitions], dtype=np.float64),
    )


class ReplayBuffer:
    """Fixed-capacity ring; oldest entries are overwritten first.

    Alongside the transition objects, columns are mirrored into
    preallocated arrays (when dims are known) so batched sampling is a
    fancy-index gather instead of a python-level stack.
    """

    def __init__(self, capacity: int = 100_000,
                 state_dim: int | None = None, action_dim: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._items: list[Transition] = []
        self._head = 0
        self._cols = None
        if state_dim is not None and action_dim is not None:
            self._cols = {
                "s": np.empty((capacity, state_dim)),
                "a": np.empty((capacity, action_dim)),
                "r": np.empty((capacity, 1)),
                "s_next": np.empty((capacity, state_dim)),
                "done": np.empty((capacity, 1)),
            }

    def __len__(self) -> int:
        return len(self._items)

    @property
    def size(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> None:
        if self.state_dim is not None and (t.s.shape != (self.state_dim,)
                                           or t.s_next.shape != (self.state_dim,)):
            raise ValueError(f"state shape {t.s.shape} does not match ({self.state_dim},)")
        if self.action_dim is not None and t.a.shape != (self.action_dim,):
            raise ValueError(f"action shape {t.a.shape} does not match ({self.action_dim},)")
        if not np.isfinite(t.r):
            raise ValueError("reward must be finite")
        if len(self._items) < self.capacity:
            slot = len(self._items)
            self._items.append(t)
        else:
            slot = self._head
            self._items[self._head] = t
            self._head = (self._head + 1) % self.capacity
        if self._cols is not None:
            self._cols["s"][slot] = t.s
            self._cols["a"][slot] = t.a
            self._cols["r"][slot, 0] = t.r
            self._cols["s_next"][slot] = t.s_next
            self._cols["done"][slot, 0] = 1.0 if t.done else 0.0

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, len(self._items), size=n)

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        idx = self.sample_indices(n, rng)
        return [self._items[i] for i in idx]

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch:
        idx = self.sample_indices(n, rng)
        if self._cols is not None:
            c = self._cols
            return Batch(s=c["s"][idx], a=c["a"][idx], r=c["r"][idx],
                         s_next=c["s_next"][idx], done=c["done"][idx])
        return stack([self._items[i] for i in idx])

    def items(self) -> list[Transition]:
        return list(self._items)
