"""Bounded experience replay."""

from __future__ import annotations

import numpy as np

from ..env import Transition


class ReplayBuffer:
    """Ring buffer of transitions; oldest entries are overwritten first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._store: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._store)

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            self._store[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def items(self) -> list[Transition]:
        """Contents in insertion order, oldest first."""
        return self._store[self._cursor :] + self._store[: self._cursor]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._store):
            raise ValueError(
                f"cannot sample {batch_size} transitions from a buffer of {len(self._store)}"
            )
        idx = rng.choice(len(self._store), size=batch_size, replace=False)
        return [self._store[i] for i in idx]
