"""
Experience replay for the regression bandit: a ring buffer with uniform
sampling and proportional prioritized sampling over a sum-tree.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.errors import ContractViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Transition:
    # One-step episode: there is deliberately no next-state field.
    state: np.ndarray
    raw_x: float
    action: float
    reward: float
    target_y: float


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    states: np.ndarray
    raw_xs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    target_ys: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.shape[0])


@dataclass(frozen=True)
class PerConfig:
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    epsilon_priority: float = 1e-3
    capacity: int = 10_000

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ContractViolation(f"alpha must be >= 0, got {self.alpha}.")
        if not 0.0 <= self.beta_start <= self.beta_end <= 1.0:
            raise ContractViolation(f"Need 0 <= beta_start <= beta_end <= 1, got {self.beta_start}, {self.beta_end}.")
        if not self.epsilon_priority > 0:
            raise ContractViolation(f"epsilon_priority must be > 0, got {self.epsilon_priority}.")
        if self.capacity < 1:
            raise ContractViolation(f"capacity must be >= 1, got {self.capacity}.")

    def beta_at(self, epoch: int, epochs: int) -> float:
        """Linear anneal: beta_start at the first epoch, beta_end at the last."""
        if epochs <= 1:
            return self.beta_start
        frac = min(max(epoch / (epochs - 1), 0.0), 1.0)
        return self.beta_start + (self.beta_end - self.beta_start) * frac


class SumTree:
    """
    Complete binary tree in an array, root at index 1, leaves at
    ``[capacity, 2 * capacity)``. Each internal node holds the sum of its
    two children. ``capacity`` is rounded up to a power of two.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation(f"SumTree capacity must be >= 1, got {capacity}.")
        size = 1
        while size < capacity:
            size *= 2
        self.capacity = size
        self.depth = size.bit_length() - 1
        self.nodes = np.zeros(2 * size, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity:]

    def get(self, leaf: int) -> float:
        return float(self.nodes[self.capacity + leaf])

    def update(self, leaf: int, value: float) -> None:
        self.update_many(np.asarray([leaf]), np.asarray([value], dtype=np.float64))

    def update_many(self, leaves: np.ndarray, values: np.ndarray) -> None:
        leaves = np.asarray(leaves, dtype=np.int64)
        if leaves.size == 0:
            return
        if leaves.min() < 0 or leaves.max() >= self.capacity:
            raise ContractViolation(f"Leaf index out of range [0, {self.capacity}).")
        values = np.asarray(values, dtype=np.float64)
        if (values < 0).any() or not np.isfinite(values).all():
            raise ContractViolation("Priorities must be finite and non-negative.")
        self.nodes[leaves + self.capacity] = values
        # Recompute every touched ancestor from its children, level by level.
        parents = np.unique((leaves + self.capacity) // 2)
        while parents[0] >= 1:
            self.nodes[parents] = self.nodes[2 * parents] + self.nodes[2 * parents + 1]
            if parents[0] == 1:
                break
            parents = np.unique(parents // 2)

    def find_prefix_sum(self, masses: np.ndarray) -> np.ndarray:
        """Leaf index for each mass, i.e. the first leaf whose cumulative sum exceeds it."""
        masses = np.array(masses, dtype=np.float64)
        idx = np.ones(masses.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * idx
            left_sum = self.nodes[left]
            go_right = masses >= left_sum
            masses = np.where(go_right, masses - left_sum, masses)
            idx = left + go_right
        return idx - self.capacity


class ReplayBuffer:
    """
    Fixed-capacity ring buffer of transitions. Priorities are tracked for every
    slot so the same buffer serves both uniform and prioritized sampling.
    """

    def __init__(self, config: Optional[PerConfig] = None):
        self.config = config or PerConfig()
        self.capacity = self.config.capacity
        self.tree = SumTree(self.capacity)
        self.max_priority = 1.0
        self.size = 0
        self.cursor = 0
        self._states: Optional[np.ndarray] = None
        self._raw_xs = np.zeros(self.capacity)
        self._actions = np.zeros(self.capacity)
        self._rewards = np.zeros(self.capacity)
        self._target_ys = np.zeros(self.capacity)

    def __len__(self) -> int:
        return self.size

    @property
    def state_dim(self) -> Optional[int]:
        return None if self._states is None else self._states.shape[1]

    def push(self, t: Transition) -> int:
        batch = TransitionBatch(
            states=np.asarray(t.state, dtype=np.float64).reshape(1, -1),
            raw_xs=np.asarray([t.raw_x], dtype=np.float64),
            actions=np.asarray([t.action], dtype=np.float64),
            rewards=np.asarray([t.reward], dtype=np.float64),
            target_ys=np.asarray([t.target_y], dtype=np.float64),
        )
        return int(self.push_batch(batch)[0])

    def push_batch(self, batch: TransitionBatch) -> np.ndarray:
        """Store transitions in order, overwriting the oldest once full. Returns their slots."""
        n = len(batch)
        states = np.asarray(batch.states, dtype=np.float64)
        if self._states is None:
            self._states = np.zeros((self.capacity, states.shape[1]))
        elif states.shape[1] != self._states.shape[1]:
            raise ContractViolation(
                f"State dimension {states.shape[1]} differs from buffer dimension {self._states.shape[1]}."
            )

        slots = (self.cursor + np.arange(n)) % self.capacity
        self._states[slots] = states
        self._raw_xs[slots] = batch.raw_xs
        self._actions[slots] = batch.actions
        self._rewards[slots] = batch.rewards
        self._target_ys[slots] = batch.target_ys
        self.tree.update_many(slots, np.full(n, self.max_priority))

        self.cursor = int((self.cursor + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)
        return slots

    def _gather(self, indices: np.ndarray) -> TransitionBatch:
        return TransitionBatch(
            states=self._states[indices],
            raw_xs=self._raw_xs[indices],
            actions=self._actions[indices],
            rewards=self._rewards[indices],
            target_ys=self._target_ys[indices],
        )

    def _require_data(self, batch: int) -> None:
        if self.size == 0:
            raise ContractViolation("Cannot sample from an empty replay buffer.")
        if batch < 1:
            raise ContractViolation(f"Batch size must be positive, got {batch}.")

    def sample(
        self, batch: int, beta: float, rng: np.random.Generator
    ) -> Tuple[np.ndarray, TransitionBatch, np.ndarray]:
        """
        Stratified proportional sampling: one draw per equal-mass segment of the
        priority total. Importance weights (N * P(i))^-beta are scaled so the
        largest weight in the batch is 1.
        """
        self._require_data(batch)
        total = self.tree.total
        segment = total / batch
        masses = (np.arange(batch) + rng.random(batch)) * segment
        indices = self.tree.find_prefix_sum(np.minimum(masses, np.nextafter(total, 0.0)))
        # Rounding at the far edge can land past the filled region.
        indices = np.minimum(indices, self.size - 1)

        probs = self.tree.leaves()[indices] / total
        weights = (self.size * probs) ** (-beta)
        weights = weights / weights.max()
        return indices, self._gather(indices), weights

    def sample_uniform(
        self, batch: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, TransitionBatch, np.ndarray]:
        self._require_data(batch)
        indices = rng.integers(0, self.size, size=batch)
        return indices, self._gather(indices), np.ones(batch)

    def update_priorities(self, indices: np.ndarray, new_errors: np.ndarray) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        errors = np.abs(np.asarray(new_errors, dtype=np.float64))
        if indices.shape != errors.shape:
            raise ContractViolation("indices and errors must have the same length.")
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise ContractViolation(f"Priority index out of range [0, {self.size}).")
        priorities = (errors + self.config.epsilon_priority) ** self.config.alpha
        self.tree.update_many(indices, priorities)
        if priorities.size:
            self.max_priority = max(self.max_priority, float(priorities.max()))
