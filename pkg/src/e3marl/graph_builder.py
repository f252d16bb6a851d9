"""Turn states, state-action pairs and observations into Euclidean graphs.

Vertex order is always agents by index, then landmarks. Node features follow
the MPE layout ``[v, |v|, a, |a|]`` for critics and ``[v, |v|]`` for actors;
node attributes are invariant one-hot entity types; edge attributes are the
relative positions ``x_u - x_v``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import EPS_NORM, Tensor
from .envs.navigation import (
    Observation,
    ObservationBatch,
    PointCloudState,
    StateBatch,
    entity_types,
)
from .errors import InvalidArgumentError
from .group import IrrepSpec, unit_directions
from .nn.graph import EuclideanGraph, GraphBatch

STATE_ACTION_FEATURES = IrrepSpec.parse("1x1o+1x0e+1x1o+1x0e")
OBSERVATION_FEATURES = IrrepSpec.parse("1x1o+1x0e")
EDGE_ATTRIBUTES = IrrepSpec.parse("1x1o")
STATE_ATTRIBUTES = IrrepSpec.parse("2x0e")        # agent, landmark
OBSERVATION_ATTRIBUTES = IrrepSpec.parse("3x0e")  # agent, landmark, observer

_SQRT_EPS = float(np.sqrt(EPS_NORM))


@dataclass(frozen=True)
class GraphConfig:
    edge_mode: str = "complete"
    k: int = 2
    include_actions: bool = True

    def __post_init__(self):
        if self.edge_mode not in ("complete", "knn"):
            raise InvalidArgumentError(f"edge_mode must be 'complete' or 'knn', got {self.edge_mode!r}")
        if self.edge_mode == "knn" and self.k < 1:
            raise InvalidArgumentError(f"knn needs k >= 1, got {self.k}")


def stable_norm(x: np.ndarray) -> np.ndarray:
    """sqrt(|x|^2 + eps) - sqrt(eps): exactly zero at zero, smooth everywhere."""
    return np.sqrt(np.sum(x * x, axis=-1) + EPS_NORM) - _SQRT_EPS


def stable_norm_tensor(x: Tensor) -> Tensor:
    return ad.l2_norm(x, axis=-1, keepdims=True) - _SQRT_EPS


def knn_edges(positions: np.ndarray, k: int) -> np.ndarray:
    """Edges i -> j for the k nearest j of each i; distance ties go to the lower id."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if not 1 <= k < n:
        raise InvalidArgumentError(f"k={k} out of range for {n} vertices")
    return _knn_batched(positions[None], k)[0]


def _knn_batched(positions: np.ndarray, k: int) -> np.ndarray:
    B, n, _ = positions.shape
    diff = positions[:, :, None, :] - positions[:, None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    d2[:, np.arange(n), np.arange(n)] = np.inf
    nbrs = np.argsort(d2, axis=2, kind="stable")[:, :, :k]            # (B, n, k)
    senders = np.broadcast_to(np.arange(n)[None, :, None], nbrs.shape)
    return np.stack([senders.reshape(B, -1), nbrs.reshape(B, -1)], axis=-1)


def complete_edges(n: int) -> np.ndarray:
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    return np.stack([i, j], axis=1).astype(np.int64)


def _edges(positions: np.ndarray, cfg: GraphConfig) -> np.ndarray:
    n = positions.shape[0]
    if cfg.edge_mode == "complete" or n <= 1:
        return complete_edges(n)
    return knn_edges(positions, cfg.k)


def _edge_attrs(positions, edges):
    return positions[edges[:, 0]] - positions[edges[:, 1]]


# ---------------------------------------------------------------------------
# single graphs

def build_state_action_graph(state: PointCloudState, action, cfg: GraphConfig | None = None
                             ) -> EuclideanGraph:
    cfg = cfg or GraphConfig()
    N, V = state.num_agents, state.num_entities
    if action is None:
        raise InvalidArgumentError("state-action graph needs one action per agent")
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (N, 3):
        raise InvalidArgumentError(f"expected actions of shape {(N, 3)}, got {action.shape}")
    acts = np.zeros((V, 3))
    acts[:N] = action
    vel = state.velocities
    feats = np.concatenate([vel, stable_norm(vel)[:, None], acts, stable_norm(acts)[:, None]],
                           axis=1)
    edges = _edges(state.positions, cfg)
    return EuclideanGraph(state.positions.copy(), edges, STATE_ACTION_FEATURES, feats,
                          STATE_ATTRIBUTES, state.types, EDGE_ATTRIBUTES,
                          _edge_attrs(state.positions, edges))


def _observation_attrs(types: np.ndarray, agent: int) -> np.ndarray:
    attrs = np.concatenate([types, np.zeros((len(types), 1))], axis=1)
    attrs[agent, 2] = 1.0
    return attrs


def build_observation_graph(obs: Observation, cfg: GraphConfig | None = None
                            ) -> tuple[EuclideanGraph, int]:
    cfg = cfg or GraphConfig()
    pos = obs.rel_positions
    feats = np.concatenate([obs.velocities, stable_norm(obs.velocities)[:, None]], axis=1)
    edges = _edges(pos, cfg)
    g = EuclideanGraph(pos.copy(), edges, OBSERVATION_FEATURES, feats, OBSERVATION_ATTRIBUTES,
                       _observation_attrs(obs.types, obs.agent), EDGE_ATTRIBUTES,
                       _edge_attrs(pos, edges))
    return g, obs.agent


# ---------------------------------------------------------------------------
# batched builders feeding the networks directly

def _batched_edges(positions: np.ndarray, cfg: GraphConfig):
    B, V, _ = positions.shape
    offs = (np.arange(B) * V)[:, None]
    if cfg.edge_mode == "complete" or V <= 1:
        tmpl = complete_edges(V)
        send = (tmpl[None, :, 0] + offs).reshape(-1)
        recv = (tmpl[None, :, 1] + offs).reshape(-1)
    else:
        if not 1 <= cfg.k < V:
            raise InvalidArgumentError(f"k={cfg.k} out of range for {V} vertices")
        e = _knn_batched(positions, cfg.k)
        send = (e[:, :, 0] + offs).reshape(-1)
        recv = (e[:, :, 1] + offs).reshape(-1)
    flat = positions.reshape(B * V, 3)
    d = flat[send] - flat[recv]
    return flat, send, recv, d, unit_directions(d)


def state_action_batch(states: StateBatch, actions, cfg: GraphConfig | None = None) -> GraphBatch:
    """Graphs for Q(s, a); ``actions`` (B, N, 3) may be a Tensor carrying gradients."""
    cfg = cfg or GraphConfig()
    B, V, N = states.size, states.num_entities, states.num_agents
    actions = ad.as_tensor(actions)
    if actions.shape != (B, N, 3):
        raise InvalidArgumentError(f"expected actions of shape {(B, N, 3)}, got {actions.shape}")
    flat, send, recv, d, units = _batched_edges(states.positions, cfg)
    vel = states.velocities.reshape(B * V, 3)
    if V > N:
        acts = ad.concat([actions, np.zeros((B, V - N, 3))], axis=1)
    else:
        acts = actions
    acts = ad.reshape(acts, (B * V, 3))
    scalars = ad.concat([stable_norm(vel)[:, None], stable_norm_tensor(acts)], axis=1)
    vectors = ad.concat([vel[:, :, None], ad.reshape(acts, (B * V, 3, 1))], axis=2)
    attrs = np.tile(entity_types(N, V - N), (B, 1))
    return GraphBatch(flat, send, recv, scalars, vectors, attrs, d, units,
                      np.repeat(np.arange(B), V), B)


def observation_batch(obs: ObservationBatch, cfg: GraphConfig | None = None) -> GraphBatch:
    cfg = cfg or GraphConfig()
    B, V = obs.size, obs.num_entities
    flat, send, recv, d, units = _batched_edges(obs.rel_positions, cfg)
    vel = obs.velocities.reshape(B * V, 3)
    types = entity_types(obs.num_agents, V - obs.num_agents)
    attrs = np.zeros((B, V, 3))
    attrs[:, :, :2] = types[None]
    attrs[np.arange(B), obs.agent, 2] = 1.0
    self_index = np.arange(B) * V + obs.agent
    return GraphBatch(flat, send, recv, Tensor(stable_norm(vel)[:, None]),
                      Tensor(vel[:, :, None]), attrs.reshape(B * V, 3), d, units,
                      np.repeat(np.arange(B), V), B, self_index.astype(np.int64))
