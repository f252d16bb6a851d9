"""Invariancy measures for actors (mean cosine) and critics (negated mean |dQ|)."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import autodiff as ad
from ..envs.navigation import (
    NavConfig,
    StateBatch,
    apply_group_to_state_batch,
    observe_all,
)
from ..errors import InvalidArgumentError, UndefinedMeasureError
from ..group import GroupElement, rotation_z, translation

log = logging.getLogger(__name__)

ANGLES_DEG = tuple(range(30, 360, 30))   # 30, 60, ..., 330
TRANSLATION_LENGTH = 1.5
ZERO_ACTION_TOL = 1e-12


def translation_offsets(length: float = TRANSLATION_LENGTH) -> list[tuple[float, float]]:
    h = 0.5 * length
    return [(length, 0.0), (-length, 0.0), (h, 0.0), (-h, 0.0),
            (0.0, length), (0.0, -length), (0.0, h), (0.0, -h)]


def rotations(angles_deg=ANGLES_DEG) -> list[GroupElement]:
    return [rotation_z(np.deg2rad(a)) for a in angles_deg]


def translations(offsets=None) -> list[GroupElement]:
    offsets = translation_offsets() if offsets is None else offsets
    return [translation((dx, dy, 0.0)) for dx, dy in offsets]


@dataclass(frozen=True)
class CosineMeasure:
    value: float
    pairs: int
    skipped: int


def _stack_transformed(states: StateBatch, elements) -> StateBatch:
    moved = [apply_group_to_state_batch(g, states) for g in elements]
    return StateBatch(np.concatenate([m.positions for m in moved]),
                      np.concatenate([m.velocities for m in moved]), states.num_agents)


def _act(actor, states: StateBatch, config) -> np.ndarray:
    with ad.no_grad():
        return actor.act(observe_all(states, config)).data


def _cosine_measure(actor, states: StateBatch, elements, config) -> CosineMeasure:
    if states.size == 0:
        raise InvalidArgumentError("invariancy measures need a non-empty state sample")
    base = _act(actor, states, config)                                  # (B*N, 3)
    moved = _act(actor, _stack_transformed(states, elements), config)   # (K*B*N, 3)
    k = len(elements)
    expected = np.concatenate([g.apply_vectors(base) for g in elements])
    n1 = np.linalg.norm(expected, axis=1)
    n2 = np.linalg.norm(moved, axis=1)
    ok = (n1 > ZERO_ACTION_TOL) & (n2 > ZERO_ACTION_TOL)
    skipped = int(np.sum(~ok))
    if skipped:
        log.warning("skipped %d of %d zero-action pairs in invariancy measure", skipped, len(ok))
    if not np.any(ok):
        raise UndefinedMeasureError(f"all {k * len(base)} action pairs are zero; "
                                    "cosine similarity is undefined")
    cos = np.sum(expected[ok] * moved[ok], axis=1) / (n1[ok] * n2[ok])
    return CosineMeasure(float(np.mean(cos)), int(np.sum(ok)), skipped)


def actor_rotation_measure(actor, states, angles_deg=ANGLES_DEG, config=None) -> CosineMeasure:
    return _cosine_measure(actor, states, rotations(angles_deg), config)


def actor_translation_measure(actor, states, offsets=None, config=None) -> CosineMeasure:
    # translations leave actions unchanged, so g.apply_vectors is the identity here
    return _cosine_measure(actor, states, translations(offsets), config)


def actor_rotation_invariancy(actor, states: StateBatch, angles_deg=ANGLES_DEG,
                              config: NavConfig | None = None) -> float:
    """Mean over agents, angles and states of cos(R a(o(s)), a(o(R s)))."""
    return actor_rotation_measure(actor, states, angles_deg, config).value


def actor_translation_invariancy(actor, states: StateBatch, offsets=None,
                                 config: NavConfig | None = None) -> float:
    return actor_translation_measure(actor, states, offsets, config).value


def _q(critic, states: StateBatch, actions: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        return critic.q(states, actions).data


def _critic_measure(critic, states: StateBatch, actions: np.ndarray, elements) -> float:
    if states.size == 0:
        raise InvalidArgumentError("invariancy measures need a non-empty state sample")
    actions = np.asarray(actions, dtype=np.float64)
    base = _q(critic, states, actions)
    moved_s = _stack_transformed(states, elements)
    moved_a = np.concatenate([g.apply_vectors(actions) for g in elements])
    moved = _q(critic, moved_s, moved_a)
    return -float(np.mean(np.abs(np.tile(base, len(elements)) - moved)))


def critic_rotation_invariancy(critic, states: StateBatch, actions, angles_deg=ANGLES_DEG) -> float:
    return _critic_measure(critic, states, actions, rotations(angles_deg))


def critic_translation_invariancy(critic, states: StateBatch, actions, offsets=None) -> float:
    return _critic_measure(critic, states, actions, translations(offsets))


@dataclass(frozen=True)
class InvariancyReport:
    actor_rotation: float
    actor_translation: float
    critic_rotation: float
    critic_translation: float
    num_states: int
    rotation_pairs: int
    rotation_skipped: int
    translation_pairs: int
    translation_skipped: int
    angles_deg: tuple = ANGLES_DEG
    offsets: tuple = field(default_factory=lambda: tuple(translation_offsets()))

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("angles_deg")
        row.pop("offsets")
        return row


def invariancy_report(actor, critic, states: StateBatch, config: NavConfig | None = None,
                      angles_deg=ANGLES_DEG, offsets=None) -> InvariancyReport:
    """All four measures on one state sample; critic actions come from the actor."""
    rot = actor_rotation_measure(actor, states, angles_deg, config)
    tr = actor_translation_measure(actor, states, offsets, config)
    actions = _act(actor, states, config).reshape(states.size, states.num_agents, 3)
    offsets = translation_offsets() if offsets is None else offsets
    return InvariancyReport(
        rot.value, tr.value,
        critic_rotation_invariancy(critic, states, actions, angles_deg),
        critic_translation_invariancy(critic, states, actions, offsets),
        states.size, rot.pairs, rot.skipped, tr.pairs, tr.skipped,
        tuple(angles_deg), tuple(tuple(o) for o in offsets))
