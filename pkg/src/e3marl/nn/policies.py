"""Actor/critic wrappers with a common interface.

Actors map an :class:`ObservationBatch` to a (B, 3) action tensor; critics map
a :class:`StateBatch` and a (B, N, 3) joint action to a (B,) Q tensor.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from ..graph_builder import GraphConfig, observation_batch, state_action_batch
from .baselines import GCNCritic, MLPActor, MLPCritic
from .module import Module
from .segnn import SEGNNActor, SEGNNCritic

ARCHITECTURES = ("MLP", "SEGNN", "GCN")


class SegnnActor(Module):
    arch = "SEGNN"

    def __init__(self, graph=None, hidden_s=32, hidden_v=8, num_layers=2, rng=None,
                 max_norm=1.0):
        super().__init__()
        self.graph = graph or GraphConfig()
        self.net = self.child("net", SEGNNActor(1, 1, 3, hidden_s, hidden_v, num_layers, rng,
                                                max_norm))

    def act(self, obs):
        return self.net(observation_batch(obs, self.graph))


class SegnnCritic(Module):
    arch = "SEGNN"

    def __init__(self, graph=None, hidden_s=32, hidden_v=8, num_layers=2, rng=None):
        super().__init__()
        self.graph = graph or GraphConfig()
        self.net = self.child("net", SEGNNCritic(2, 2, 2, hidden_s, hidden_v, num_layers, rng))

    def q(self, states, actions):
        return self.net(state_action_batch(states, actions, self.graph))


def make_actor(arch: str, num_agents: int, rng: np.random.Generator, *, graph=None,
               hidden_s=32, hidden_v=8, num_layers=2, hidden=128, max_norm=1.0,
               absolute_position=False):
    if arch == "SEGNN":
        return SegnnActor(graph, hidden_s, hidden_v, num_layers, rng, max_norm)
    if arch == "MLP":
        return MLPActor(num_agents, hidden, rng, max_norm, absolute_position)
    raise InvalidArgumentError(f"unknown actor architecture {arch!r}")


def make_critic(arch: str, num_agents: int, rng: np.random.Generator, *, graph=None,
                hidden_s=32, hidden_v=8, num_layers=2, hidden=128):
    if arch == "SEGNN":
        return SegnnCritic(graph, hidden_s, hidden_v, num_layers, rng)
    if arch == "MLP":
        return MLPCritic(num_agents, hidden, rng)
    if arch == "GCN":
        return GCNCritic(hidden, rng)
    raise InvalidArgumentError(f"unknown critic architecture {arch!r}")
