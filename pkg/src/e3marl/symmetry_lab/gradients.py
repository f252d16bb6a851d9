"""Parameter gradients of the MADDPG losses on a batch versus its transformed copy.

For an invariant critic and an equivariant actor, both losses are invariant
functions of the batch, so their parameter gradients must coincide exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..envs.navigation import apply_group_to_state_batch
from ..group import GroupElement, random_element
from ..marl.buffer import TransitionBatch
from .report import VerificationReport

GRADIENT_TOL = 1e-8


def transform_batch(g: GroupElement, batch: TransitionBatch) -> TransitionBatch:
    return replace(batch, states=apply_group_to_state_batch(g, batch.states),
                   actions=g.apply_vectors(batch.actions),
                   next_states=apply_group_to_state_batch(g, batch.next_states))


def _flat_grads(module) -> np.ndarray:
    return np.concatenate([p.grad.ravel() if p.grad is not None else np.zeros(p.data.size)
                           for p in module.parameters()])


def loss_gradients(agent, batch: TransitionBatch, agents: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """(critic gradient, actor gradient) without touching the optimizers."""
    agent.critic.zero_grad()
    ad.backward(agent.critic_loss(batch))
    gc = _flat_grads(agent.critic)
    agent.actor.zero_grad()
    agent.critic.zero_grad()
    ad.backward(agent.actor_loss(batch, agents))
    ga = _flat_grads(agent.actor)
    agent.actor.zero_grad()
    agent.critic.zero_grad()
    return gc, ga


@dataclass
class GradientComparison:
    element: GroupElement
    critic_error: float
    actor_error: float
    critic_norm: float
    actor_norm: float


def compare_gradients(agent, batch, agents, g: GroupElement) -> GradientComparison:
    gc, ga = loss_gradients(agent, batch, agents)
    gc2, ga2 = loss_gradients(agent, transform_batch(g, batch), agents)
    return GradientComparison(g, float(np.max(np.abs(gc - gc2))), float(np.max(np.abs(ga - ga2))),
                              float(np.linalg.norm(gc)), float(np.linalg.norm(ga)))


def gradient_symmetry_check(agent, batch, agents, num_elements: int = 10, seed: int = 0,
                            tol: float = GRADIENT_TOL, planar: bool = True) -> VerificationReport:
    rng = np.random.default_rng(seed)
    report = VerificationReport("parameter-gradient symmetry")
    critic = report.group("critic gradient", tol)
    actor = report.group("actor gradient", tol)
    for i in range(num_elements):
        g = random_element(rng, planar=planar)
        c = compare_gradients(agent, batch, agents, g)
        critic.record(np.array([c.critic_error]), lambda _, i=i: f"element {i}")
        actor.record(np.array([c.actor_error]), lambda _, i=i: f"element {i}")
    return report
