"""Greedy evaluation on fixed reset seeds, vectorized over episodes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.navigation import NavConfig, StateBatch, nav_reset, observe_all, step_batch
from ..errors import ArchitectureIncompatibleError
from .policies import actor_policy, random_policy


@dataclass(frozen=True)
class EvalResult:
    mean_return: float
    returns: np.ndarray

    @property
    def std_return(self) -> float:
        return float(np.std(self.returns))


def initial_states(config: NavConfig, episodes: int, seed: int) -> StateBatch:
    rng = np.random.default_rng(seed)
    return StateBatch.stack([nav_reset(config.num_agents, rng, config) for _ in range(episodes)])


def rollout(policy, config: NavConfig, start: StateBatch, record: bool = False):
    """Run every episode in ``start`` for ``episode_length`` steps in lockstep.

    Returns per-episode returns and, if ``record``, the visited states (T, B, V, 3) x 2.
    """
    N, B = config.num_agents, start.size
    pos, vel = start.positions, start.velocities
    returns = np.zeros(B)
    visited = []
    for _ in range(config.episode_length):
        states = StateBatch(pos, vel, N)
        if record:
            visited.append(states)
        acts = np.asarray(policy(observe_all(states, config))).reshape(B, N, 3)
        pos, vel, r = step_batch(pos, vel, acts, config)
        returns += r
    return returns, visited


def evaluate_policy(policy, config: NavConfig, episodes: int = 50, seed: int = 0) -> EvalResult:
    returns, _ = rollout(policy, config, initial_states(config, episodes, seed))
    return EvalResult(float(np.mean(returns)), returns)


def evaluate(actor, config: NavConfig, episodes: int = 50, seed: int = 0) -> EvalResult:
    """Deterministic greedy rollouts of a shared actor (no exploration noise)."""
    return evaluate_policy(actor_policy(actor), config, episodes, seed)


def evaluate_random(config: NavConfig, episodes: int = 50, seed: int = 0) -> EvalResult:
    policy = random_policy(np.random.default_rng([seed, 1]), config.max_action)
    return evaluate_policy(policy, config, episodes, seed)


def check_variable_size(actor, num_agents: int) -> None:
    if getattr(actor, "arch", None) == "MLP" and getattr(actor, "num_agents", num_agents) != num_agents:
        raise ArchitectureIncompatibleError(
            f"MLP actor has a fixed input size for {actor.num_agents} agents; "
            f"it cannot run on {num_agents}")


def zero_shot_eval(actor, num_agents: int, episodes: int = 50, seed: int = 0,
                   config: NavConfig | None = None) -> EvalResult:
    """Evaluate an unmodified actor on a game with ``num_agents`` agents."""
    check_variable_size(actor, num_agents)
    cfg = config or NavConfig(num_agents=num_agents)
    return evaluate(actor, cfg, episodes, seed)


def sample_on_policy_states(policy, config: NavConfig, count: int,
                            rng: np.random.Generator) -> StateBatch:
    """One state per greedy rollout, at a uniformly drawn time step."""
    start = StateBatch.stack([nav_reset(config.num_agents, rng, config) for _ in range(count)])
    _, visited = rollout(policy, config, start, record=True)
    t = rng.integers(0, len(visited), size=count)
    b = np.arange(count)
    pos = np.stack([v.positions for v in visited])[t, b]
    vel = np.stack([v.velocities for v in visited])[t, b]
    return StateBatch(pos, vel, config.num_agents)
