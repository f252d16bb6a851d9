"""Cooperative Navigation as an E(3)-symmetric Markov game.

Entities are agents (indices 0..N-1) followed by N landmarks. Positions live
in 3D with z = 0 at reset; the dynamics and reward only use norms and
differences, so the game is equivariant under all of E(3), not just planar
motions.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from ..errors import InvalidArgumentError
from ..group import GroupElement

log = logging.getLogger(__name__)

AGENT, LANDMARK = 0, 1


@dataclass(frozen=True)
class NavConfig:
    num_agents: int = 3
    damping: float = 0.25
    dt: float = 0.1
    max_speed: float = 1.0
    max_action: float = 1.0
    collision_radius: float = 0.2
    collision_penalty: float = 1.0
    episode_length: int = 25
    box: float = 1.0
    # compatibility flag: append the agent's own absolute position to observations
    absolute_self_position: bool = False

    def __post_init__(self):
        if self.num_agents < 1:
            raise InvalidArgumentError(f"num_agents must be >= 1, got {self.num_agents}")

    @property
    def num_entities(self) -> int:
        return 2 * self.num_agents


def entity_types(num_agents: int, num_landmarks: int | None = None) -> np.ndarray:
    m = num_agents if num_landmarks is None else num_landmarks
    types = np.zeros((num_agents + m, 2))
    types[:num_agents, AGENT] = 1.0
    types[num_agents:, LANDMARK] = 1.0
    return types


@dataclass(frozen=True)
class PointCloudState:
    positions: np.ndarray   # (V, 3)
    velocities: np.ndarray  # (V, 3); landmarks always zero
    num_agents: int
    t: int = 0

    @property
    def num_entities(self) -> int:
        return self.positions.shape[0]

    @property
    def types(self) -> np.ndarray:
        return entity_types(self.num_agents, self.num_entities - self.num_agents)


@dataclass(frozen=True)
class Observation:
    """Agent ``agent``'s view: everything relative to its own position."""

    rel_positions: np.ndarray  # (V, 3), row ``agent`` is zero
    velocities: np.ndarray     # (V, 3), only row ``agent`` is nonzero
    types: np.ndarray          # (V, 2)
    agent: int
    abs_position: np.ndarray | None = None


@dataclass(frozen=True)
class StateBatch:
    positions: np.ndarray   # (B, V, 3)
    velocities: np.ndarray  # (B, V, 3)
    num_agents: int

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def num_entities(self) -> int:
        return self.positions.shape[1]

    @classmethod
    def stack(cls, states: Iterable[PointCloudState]) -> StateBatch:
        states = list(states)
        return cls(np.stack([s.positions for s in states]),
                   np.stack([s.velocities for s in states]), states[0].num_agents)


@dataclass(frozen=True)
class ObservationBatch:
    rel_positions: np.ndarray  # (B, V, 3)
    velocities: np.ndarray     # (B, V, 3)
    agent: np.ndarray          # (B,) observer entity index
    num_agents: int
    abs_position: np.ndarray | None = None  # (B, 3)

    @property
    def size(self) -> int:
        return self.rel_positions.shape[0]

    @property
    def num_entities(self) -> int:
        return self.rel_positions.shape[1]

    @classmethod
    def stack(cls, observations: Iterable[Observation]) -> ObservationBatch:
        obs = list(observations)
        na = int(obs[0].types[:, AGENT].sum())
        absp = None
        if obs[0].abs_position is not None:
            absp = np.stack([o.abs_position for o in obs])
        return cls(np.stack([o.rel_positions for o in obs]),
                   np.stack([o.velocities for o in obs]),
                   np.array([o.agent for o in obs]), na, absp)

    def unstack(self) -> list[Observation]:
        types = entity_types(self.num_agents, self.num_entities - self.num_agents)
        return [Observation(self.rel_positions[b], self.velocities[b], types, int(self.agent[b]),
                            None if self.abs_position is None else self.abs_position[b])
                for b in range(self.size)]


# ---------------------------------------------------------------------------
# dynamics

def nav_reset(num_agents: int, seed=None, config: NavConfig | None = None) -> PointCloudState:
    """Agents and N landmarks uniform in the box, z = 0, all velocities zero."""
    if num_agents < 1:
        raise InvalidArgumentError(f"num_agents must be >= 1, got {num_agents}")
    cfg = config or NavConfig(num_agents=num_agents)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    V = 2 * num_agents
    pos = np.zeros((V, 3))
    pos[:, :2] = rng.uniform(-cfg.box, cfg.box, size=(V, 2))
    return PointCloudState(pos, np.zeros((V, 3)), num_agents, 0)


def clip_norm(v: np.ndarray, max_norm: float) -> np.ndarray:
    n = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    scale = np.where(n > max_norm, max_norm / np.where(n > 0, n, 1.0), 1.0)
    return v * scale


def reward_batch(positions: np.ndarray, num_agents: int, config: NavConfig) -> np.ndarray:
    """Coverage distance penalty plus collision penalty for (B, V, 3) positions."""
    agents = positions[:, :num_agents]
    marks = positions[:, num_agents:]
    d = np.sqrt(np.sum((agents[:, :, None] - marks[:, None]) ** 2, axis=-1))  # (B, N, M)
    cover = d.min(axis=1).sum(axis=1)
    dd = np.sqrt(np.sum((agents[:, :, None] - agents[:, None]) ** 2, axis=-1))
    iu = np.triu_indices(num_agents, k=1)
    collisions = (dd[:, iu[0], iu[1]] < config.collision_radius).sum(axis=1)
    return -cover - config.collision_penalty * collisions


def step_batch(positions: np.ndarray, velocities: np.ndarray, actions: np.ndarray,
               config: NavConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized dynamics over a leading batch axis; returns (pos', vel', reward)."""
    n = actions.shape[-2]
    a = np.asarray(actions, dtype=np.float64)
    norms = np.sqrt(np.sum(a * a, axis=-1))
    if np.any(norms > config.max_action * (1 + 1e-12)):
        log.debug("clipping %d actions above max norm %.3f",
                  int(np.sum(norms > config.max_action)), config.max_action)
        a = clip_norm(a, config.max_action)
    vel = velocities.copy()
    pos = positions.copy()
    v_agents = (1.0 - config.damping) * vel[:, :n] + a * config.dt
    vel[:, :n] = clip_norm(v_agents, config.max_speed)
    pos[:, :n] = pos[:, :n] + vel[:, :n] * config.dt
    return pos, vel, reward_batch(pos, n, config)


def nav_step(state: PointCloudState, action, config: NavConfig | None = None):
    """Returns (next_state, reward, done); done once ``episode_length`` steps elapsed."""
    cfg = config or NavConfig(num_agents=state.num_agents)
    a = np.asarray(action, dtype=np.float64).reshape(state.num_agents, 3)
    pos, vel, r = step_batch(state.positions[None], state.velocities[None], a[None], cfg)
    nxt = PointCloudState(pos[0], vel[0], state.num_agents, state.t + 1)
    return nxt, float(r[0]), nxt.t >= cfg.episode_length


def observe_batch(states: StateBatch, agents: np.ndarray, config: NavConfig | None = None
                  ) -> ObservationBatch:
    """Observation of entity ``agents[b]`` in state ``b``."""
    B = states.size
    idx = np.arange(B)
    own = states.positions[idx, agents]
    rel = states.positions - own[:, None, :]
    vel = np.zeros_like(states.velocities)
    vel[idx, agents] = states.velocities[idx, agents]
    absp = own.copy() if (config is not None and config.absolute_self_position) else None
    return ObservationBatch(rel, vel, np.asarray(agents), states.num_agents, absp)


def observe_all(states: StateBatch, config: NavConfig | None = None) -> ObservationBatch:
    """Every agent's observation, ordered state-major: row b*N + i is agent i in state b."""
    N = states.num_agents
    rep = StateBatch(np.repeat(states.positions, N, axis=0),
                     np.repeat(states.velocities, N, axis=0), N)
    return observe_batch(rep, np.tile(np.arange(N), states.size), config)


def nav_observe(state: PointCloudState, agent: int, config: NavConfig | None = None
                ) -> Observation:
    if not 0 <= agent < state.num_agents:
        raise InvalidArgumentError(f"agent index {agent} out of range [0, {state.num_agents})")
    ob = observe_batch(StateBatch(state.positions[None], state.velocities[None], state.num_agents),
                       np.array([agent]), config)
    return ob.unstack()[0]


# ---------------------------------------------------------------------------
# group actions L_g, K_g, H_g

def apply_group_to_state(g: GroupElement, state: PointCloudState) -> PointCloudState:
    return replace(state, positions=g.apply_points(state.positions),
                   velocities=g.apply_vectors(state.velocities))


def apply_group_to_action(g: GroupElement, action: np.ndarray) -> np.ndarray:
    return g.apply_vectors(action)


def apply_group_to_observation(g: GroupElement, obs: Observation) -> Observation:
    absp = None if obs.abs_position is None else g.apply_points(obs.abs_position)
    return replace(obs, rel_positions=g.apply_vectors(obs.rel_positions),
                   velocities=g.apply_vectors(obs.velocities), abs_position=absp)


def apply_group_to_state_batch(g: GroupElement, states: StateBatch) -> StateBatch:
    return replace(states, positions=g.apply_points(states.positions),
                   velocities=g.apply_vectors(states.velocities))


def apply_group_to_observation_batch(g: GroupElement, obs: ObservationBatch) -> ObservationBatch:
    absp = None if obs.abs_position is None else g.apply_points(obs.abs_position)
    return replace(obs, rel_positions=g.apply_vectors(obs.rel_positions),
                   velocities=g.apply_vectors(obs.velocities), abs_position=absp)


# ---------------------------------------------------------------------------

class NavigationEnv:
    """Stateful wrapper with the reset/step/observe protocol used by training."""

    def __init__(self, config: NavConfig):
        self.config = config
        self.state: PointCloudState | None = None

    @property
    def num_agents(self) -> int:
        return self.config.num_agents

    def reset(self, rng) -> PointCloudState:
        self.state = nav_reset(self.config.num_agents, rng, self.config)
        return self.state

    def step(self, action):
        self.state, r, done = nav_step(self.state, action, self.config)
        return self.state, r, done

    def observe_all(self) -> ObservationBatch:
        return observe_all(StateBatch(self.state.positions[None], self.state.velocities[None],
                                      self.state.num_agents), self.config)


def write_trace(path, records: Iterable[tuple[PointCloudState, np.ndarray, float]]) -> None:
    """One JSON object per line: step index, state, joint action and reward."""
    with open(path, "w") as fh:
        for state, action, reward in records:
            fh.write(json.dumps({
                "t": state.t,
                "positions": state.positions.tolist(),
                "velocities": state.velocities.tolist(),
                "actions": np.asarray(action).tolist(),
                "reward": reward,
            }) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
