"""Non-equivariant baselines: MLP actor/critic and a plain message-passing critic."""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ArchitectureIncompatibleError, ShapeError
from .module import Module, glorot
from .segnn import squash_norm

HIDDEN_SIZE = 128


class MLP(Module):
    def __init__(self, sizes, rng=None, out_gain=1.0):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.sizes = tuple(sizes)
        self.weights, self.biases = [], []
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if k == len(sizes) - 2 else np.sqrt(2.0)
            self.weights.append(self.param(f"w{k}", glorot(rng, a, b, gain)))
            self.biases.append(self.param(f"b{k}", np.zeros(b)))

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"MLP expects input length {self.sizes[0]}, got {x.shape[-1]}")
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = ad.matmul(x, w) + b
            if k < last:
                x = ad.relu(x)
        return x


def mlp_forward(net: MLP, x) -> np.ndarray:
    with ad.no_grad():
        return net(np.asarray(x, dtype=np.float64)).data


def flatten_observation(obs, num_agents: int, absolute: bool) -> np.ndarray:
    """[own velocity, landmark offsets, other-agent offsets, (own absolute position)]."""
    B, V = obs.size, obs.num_entities
    N = obs.num_agents
    rows = np.arange(B)
    own_v = obs.velocities[rows, obs.agent]
    marks = obs.rel_positions[:, N:].reshape(B, -1)
    k = np.arange(N - 1)[None, :]
    others_idx = k + (k >= obs.agent[:, None])
    others = obs.rel_positions[rows[:, None], others_idx].reshape(B, -1)
    parts = [own_v, marks, others]
    if absolute:
        parts.append(obs.abs_position if obs.abs_position is not None else np.zeros((B, 3)))
    return np.concatenate(parts, axis=1)


class MLPActor(Module):
    arch = "MLP"

    def __init__(self, num_agents, hidden=HIDDEN_SIZE, rng=None, max_norm=1.0,
                 absolute_position=False):
        super().__init__()
        self.num_agents = num_agents
        self.absolute_position = absolute_position
        self.max_norm = max_norm
        in_dim = 3 + 3 * num_agents + 3 * (num_agents - 1) + (3 if absolute_position else 0)
        self.net = self.child("net", MLP([in_dim, hidden, hidden, 2], rng, out_gain=0.1))

    def act(self, obs) -> Tensor:
        if obs.num_agents != self.num_agents or obs.num_entities != 2 * self.num_agents:
            raise ArchitectureIncompatibleError(
                f"MLP actor was built for {self.num_agents} agents; its input size is fixed "
                f"and cannot take {obs.num_agents}")
        x = flatten_observation(obs, self.num_agents, self.absolute_position)
        out = self.net(x)
        a = ad.concat([out, np.zeros((obs.size, 1))], axis=1)
        return squash_norm(a, self.max_norm)


class MLPCritic(Module):
    arch = "MLP"

    def __init__(self, num_agents, hidden=HIDDEN_SIZE, rng=None):
        super().__init__()
        self.num_agents = num_agents
        in_dim = 3 * 2 * num_agents + 3 * num_agents + 3 * num_agents
        self.net = self.child("net", MLP([in_dim, hidden, hidden, 1], rng))

    def q(self, states, actions) -> Tensor:
        if states.num_agents != self.num_agents:
            raise ArchitectureIncompatibleError(
                f"MLP critic was built for {self.num_agents} agents, got {states.num_agents}")
        B, N = states.size, states.num_agents
        actions = ad.as_tensor(actions)
        x = ad.concat([states.positions.reshape(B, -1),
                       states.velocities[:, :N].reshape(B, -1),
                       ad.reshape(actions, (B, 3 * N))], axis=1)
        return ad.reshape(self.net(x), (B,))


class GCNCritic(Module):
    """Message passing over raw coordinates with flat features; no geometric symmetry."""

    arch = "GCN"

    def __init__(self, hidden=HIDDEN_SIZE, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        in_dim = 3 + 3 + 3 + 2  # position, velocity, action, type
        self.inp = self.child("inp", MLP([in_dim, hidden], rng))
        self.msg = self.child("msg", MLP([2 * hidden, hidden], rng))
        self.out = self.child("out", MLP([hidden, hidden, 1], rng))

    def q(self, states, actions) -> Tensor:
        from ..graph_builder import complete_edges
        from ..envs.navigation import entity_types
        B, V, N = states.size, states.num_entities, states.num_agents
        actions = ad.as_tensor(actions)
        acts = ad.concat([actions, np.zeros((B, V - N, 3))], axis=1) if V > N else actions
        types = np.broadcast_to(entity_types(N, V - N)[None], (B, V, 2))
        x = ad.concat([states.positions, states.velocities, acts, types], axis=2)
        x = ad.relu(self.inp(ad.reshape(x, (B * V, 11))))
        tmpl = complete_edges(V)
        offs = (np.arange(B) * V)[:, None]
        send = (tmpl[None, :, 0] + offs).reshape(-1)
        recv = (tmpl[None, :, 1] + offs).reshape(-1)
        m = ad.gather_rows(x, send)
        agg = ad.scatter_add_rows(m, recv, B * V) * (1.0 / max(V - 1, 1))
        h = ad.relu(self.msg(ad.concat([x, agg], axis=1)))
        pooled = ad.scatter_add_rows(h, np.repeat(np.arange(B), V), B) * (1.0 / V)
        return ad.reshape(self.out(pooled), (B,))
