"""Behaviour policies: trained actors, random and scripted baselines.

A policy maps an :class:`ObservationBatch` to a (B, 3) numpy action array.
"""
from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..envs.navigation import ObservationBatch, clip_norm
from ..errors import InvalidArgumentError


def actor_policy(actor):
    def policy(obs: ObservationBatch) -> np.ndarray:
        with ad.no_grad():
            return actor.act(obs).data.copy()
    return policy


def zero_policy(obs: ObservationBatch) -> np.ndarray:
    return np.zeros((obs.size, 3))


def random_policy(rng: np.random.Generator, max_action: float = 1.0):
    """Uniform over the disk of radius ``max_action`` in the x-y plane."""
    def policy(obs: ObservationBatch) -> np.ndarray:
        B = obs.size
        r = max_action * np.sqrt(rng.uniform(size=B))
        phi = rng.uniform(0.0, 2 * np.pi, size=B)
        return np.stack([r * np.cos(phi), r * np.sin(phi), np.zeros(B)], axis=1)
    return policy


def heuristic_policy(max_action: float = 1.0, kp: float = 4.0, kd: float = 2.0):
    """Each agent steers to its nearest landmark with a PD controller."""
    def policy(obs: ObservationBatch) -> np.ndarray:
        N, B = obs.num_agents, obs.size
        offsets = obs.rel_positions[:, N:]
        nearest = np.argmin(np.sum(offsets * offsets, axis=-1), axis=1)
        target = offsets[np.arange(B), nearest]
        own_v = obs.velocities[np.arange(B), obs.agent]
        return clip_norm(kp * target - kd * own_v, max_action)
    return policy


def exploration_noise(action: np.ndarray, scale: float, rng: np.random.Generator,
                      max_norm: float = 1.0) -> np.ndarray:
    """Isotropic Gaussian noise in the x-y plane followed by norm clipping."""
    if scale < 0:
        raise InvalidArgumentError(f"noise scale must be non-negative, got {scale}")
    a = np.array(action, dtype=np.float64)
    if scale > 0:
        a[..., :2] += scale * rng.standard_normal(a.shape[:-1] + (2,))
    return clip_norm(a, max_norm)
