"""Fixed-capacity FIFO experience replay with uniform sampling."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = int(capacity)
        self._count = 0
        self._states = None
        self._actions = None
        self._rewards = None
        self._next_states = None
        self._dones = None

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    def _allocate(self, state, action):
        self._states = np.empty((self.capacity, len(state)))
        self._actions = np.empty((self.capacity, len(action)))
        self._rewards = np.empty(self.capacity)
        self._next_states = np.empty((self.capacity, len(state)))
        self._dones = np.empty(self.capacity)

    def add(self, state, action, reward, next_state, done=False):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if self._states is None:
            self._allocate(state, action)
        slot = self._count % self.capacity
        self._states[slot] = state
        self._actions[slot] = action
        self._rewards[slot] = reward
        self._next_states[slot] = np.asarray(next_state, dtype=np.float64)
        self._dones[slot] = float(done)
        self._count += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        n = len(self)
        if batch_size > n:
            raise ValueError(f"cannot sample {batch_size} from buffer of {n}")
        idx = rng.integers(0, n, size=batch_size)
        return {
            "states": self._states[idx].copy(),
            "actions": self._actions[idx].copy(),
            "rewards": self._rewards[idx].copy(),
            "next_states": self._next_states[idx].copy(),
            "dones": self._dones[idx].copy(),
        }

    def stored_states(self) -> np.ndarray:
        """Copies of the currently held states (ring order, for inspection)."""
        if self._states is None:
            return np.empty((0, 0))
        return self._states[: len(self)].copy()
