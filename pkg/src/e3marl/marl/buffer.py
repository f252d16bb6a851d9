"""Replay storage for off-policy training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.navigation import ObservationBatch, StateBatch, observe_all
from ..errors import InvalidArgumentError, ShapeError


@dataclass(frozen=True)
class Transition:
    """One joint step. Observations are derived from states on demand."""

    positions: np.ndarray       # (V, 3)
    velocities: np.ndarray      # (V, 3)
    actions: np.ndarray         # (N, 3)
    reward: float
    next_positions: np.ndarray
    next_velocities: np.ndarray
    done: bool

    @property
    def num_agents(self) -> int:
        return self.actions.shape[0]


@dataclass(frozen=True)
class TransitionBatch:
    states: StateBatch
    actions: np.ndarray   # (B, N, 3)
    rewards: np.ndarray   # (B,)
    next_states: StateBatch
    dones: np.ndarray     # (B,) float

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @property
    def observations(self) -> ObservationBatch:
        return observe_all(self.states)

    @property
    def next_observations(self) -> ObservationBatch:
        return observe_all(self.next_states)


class ReplayBuffer:
    """Fixed-capacity ring buffer over flat arrays."""

    def __init__(self, capacity: int, num_agents: int, num_entities: int | None = None):
        if capacity < 1:
            raise InvalidArgumentError(f"capacity must be positive, got {capacity}")
        V = num_entities or 2 * num_agents
        self.capacity, self.num_agents, self.num_entities = capacity, num_agents, V
        self.pos = np.zeros((capacity, V, 3))
        self.vel = np.zeros((capacity, V, 3))
        self.act = np.zeros((capacity, num_agents, 3))
        self.rew = np.zeros(capacity)
        self.next_pos = np.zeros((capacity, V, 3))
        self.next_vel = np.zeros((capacity, V, 3))
        self.done = np.zeros(capacity)
        self._head = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add_batch(self, states: StateBatch, actions, rewards, next_states: StateBatch, dones):
        actions = np.asarray(actions, dtype=np.float64)
        k = states.size
        if actions.shape != (k, self.num_agents, 3) or states.num_entities != self.num_entities:
            raise ShapeError(f"transition batch does not match a buffer for "
                             f"{self.num_agents} agents / {self.num_entities} entities")
        idx = (self._head + np.arange(k)) % self.capacity
        self.pos[idx], self.vel[idx] = states.positions, states.velocities
        self.act[idx] = actions
        self.rew[idx] = rewards
        self.next_pos[idx], self.next_vel[idx] = next_states.positions, next_states.velocities
        self.done[idx] = np.asarray(dones, dtype=np.float64)
        self._head = int((self._head + k) % self.capacity)
        self.size = min(self.size + k, self.capacity)

    def add(self, tr: Transition) -> None:
        n = self.num_agents
        self.add_batch(StateBatch(tr.positions[None], tr.velocities[None], n), tr.actions[None],
                       [tr.reward], StateBatch(tr.next_positions[None], tr.next_velocities[None],
                                               n), [tr.done])

    def get(self, idx) -> TransitionBatch:
        idx = np.asarray(idx, dtype=np.int64)
        n = self.num_agents
        return TransitionBatch(StateBatch(self.pos[idx], self.vel[idx], n), self.act[idx],
                               self.rew[idx], StateBatch(self.next_pos[idx], self.next_vel[idx], n),
                               self.done[idx])

    def transition(self, i: int) -> Transition:
        return Transition(self.pos[i].copy(), self.vel[i].copy(), self.act[i].copy(),
                          float(self.rew[i]), self.next_pos[i].copy(), self.next_vel[i].copy(),
                          bool(self.done[i]))


def sample_indices(size: int, batch_size: int, rng: np.random.Generator) -> np.ndarray | None:
    if batch_size < 1:
        raise InvalidArgumentError(f"batch size must be positive, got {batch_size}")
    if size < batch_size:
        return None
    return rng.choice(size, size=batch_size, replace=False)


def sample_batch(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator
                 ) -> TransitionBatch | None:
    """Uniform sample without replacement; ``None`` while the buffer is too small."""
    idx = sample_indices(len(buffer), batch_size, rng)
    return None if idx is None else buffer.get(idx)
