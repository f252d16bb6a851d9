"""Two-agent gridworld with C4 rotational symmetry, for exact verification.

Cells use centered integer coordinates (x, y) in {-h..h}^2 with h = n // 2.
Group element k in {0, 1, 2, 3} rotates by k * 90 degrees counter-clockwise
about the center cell; it acts on positions and on move vectors alike.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from ..errors import InvalidArgumentError, SymmetryViolationError

MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0), (0, 0))  # up, down, left, right, stay
MOVE_NAMES = ("up", "down", "left", "right", "stay")
GROUP_ORDER = 4


def rotate_cell(cell, k: int):
    x, y = cell
    for _ in range(k % 4):
        x, y = -y, x
    return (x, y)


def compose(k1: int, k2: int) -> int:
    return (k1 + k2) % GROUP_ORDER


def inverse(k: int) -> int:
    return (-k) % GROUP_ORDER


@dataclass(frozen=True)
class TabularGame:
    n: int
    goals: tuple[tuple[int, int], ...]
    states: tuple[tuple[tuple[int, int], tuple[int, int]], ...]
    actions: tuple[tuple[int, int], ...]  # joint action = (move index agent 1, agent 2)
    P: np.ndarray            # (S, A, S) transition probabilities
    R: np.ndarray            # (S, A) rewards
    state_perm: np.ndarray   # (4, S): index of L_g[s]
    action_perm: np.ndarray  # (4, A): index of K_g[a] (independent of s here)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    def with_reward(self, s: int, a: int, value: float) -> TabularGame:
        R = self.R.copy()
        R[s, a] = value
        return replace(self, R=R)


def _cells(n: int):
    h = n // 2
    return [(x, y) for x in range(-h, h + 1) for y in range(-h, h + 1)]


def tabular_build(n: int = 3, goals=None) -> TabularGame:
    """Build the game; ``goals`` defaults to the four corner cells."""
    if n < 1 or n % 2 == 0:
        raise InvalidArgumentError(f"grid size must be odd and positive, got {n}")
    h = n // 2
    if goals is None:
        goals = [(-h, -h), (-h, h), (h, -h), (h, h)]
    goals = tuple(sorted({tuple(int(c) for c in g) for g in goals}))
    if not goals:
        raise InvalidArgumentError("goal set is empty")
    for g in goals:
        if max(abs(g[0]), abs(g[1])) > h:
            raise InvalidArgumentError(f"goal {g} lies outside the {n}x{n} grid")
    goal_set = set(goals)
    bad = [g for g in goals if rotate_cell(g, 1) not in goal_set]
    if bad:
        raise SymmetryViolationError(f"goal set is not closed under 90-degree rotation: {bad}",
                                     [("goal", g) for g in bad])

    cells = _cells(n)
    states = tuple(itertools.product(cells, cells))
    sidx = {s: i for i, s in enumerate(states)}
    actions = tuple(itertools.product(range(5), range(5)))
    aidx = {a: i for i, a in enumerate(actions)}
    move_idx = {m: i for i, m in enumerate(MOVES)}

    def clamp(c):
        return (min(max(c[0], -h), h), min(max(c[1], -h), h))

    def goal_dist(c):
        return min(abs(c[0] - g[0]) + abs(c[1] - g[1]) for g in goals)

    S, A = len(states), len(actions)
    P = np.zeros((S, A, S))
    R = np.zeros((S, A))
    for si, (p1, p2) in enumerate(states):
        r = -(goal_dist(p1) + goal_dist(p2)) / n
        for ai, (m1, m2) in enumerate(actions):
            q1 = clamp((p1[0] + MOVES[m1][0], p1[1] + MOVES[m1][1]))
            q2 = clamp((p2[0] + MOVES[m2][0], p2[1] + MOVES[m2][1]))
            P[si, ai, sidx[(q1, q2)]] = 1.0
            R[si, ai] = r

    state_perm = np.array([[sidx[(rotate_cell(p1, k), rotate_cell(p2, k))] for p1, p2 in states]
                           for k in range(GROUP_ORDER)])
    action_perm = np.array([[aidx[(move_idx[rotate_cell(MOVES[m1], k)],
                                   move_idx[rotate_cell(MOVES[m2], k)])] for m1, m2 in actions]
                            for k in range(GROUP_ORDER)])
    return TabularGame(n, goals, states, actions, P, R, state_perm, action_perm)


def check_group_axioms(game: TabularGame) -> list[str]:
    """Group actions must be bijections forming a representation of C4."""
    problems = []
    S, A = game.num_states, game.num_actions
    for k in range(GROUP_ORDER):
        if sorted(game.state_perm[k]) != list(range(S)):
            problems.append(f"L_{k} is not a bijection")
        if sorted(game.action_perm[k]) != list(range(A)):
            problems.append(f"K_{k} is not a bijection")
    if not np.array_equal(game.state_perm[0], np.arange(S)):
        problems.append("L_0 is not the identity")
    for k1 in range(GROUP_ORDER):
        for k2 in range(GROUP_ORDER):
            k = compose(k1, k2)
            if not np.array_equal(game.state_perm[k1][game.state_perm[k2]], game.state_perm[k]):
                problems.append(f"L_{k1} L_{k2} != L_{k}")
            if not np.array_equal(game.action_perm[k1][game.action_perm[k2]], game.action_perm[k]):
                problems.append(f"K_{k1} K_{k2} != K_{k}")
    return problems


@dataclass
class AuditReport:
    tuples_checked: int
    violations: list  # (kind, s, a, g) tuples
    axiom_problems: list

    @property
    def passed(self) -> bool:
        return not self.violations and not self.axiom_problems


def audit(game: TabularGame) -> AuditReport:
    """Exhaustive check of P(s'|s,a) = P(L_g s'|L_g s, K_g a) and r(s,a) = r(L_g s, K_g a).

    The observation function is the identity (full observability), so its
    equivariance is implied by the state permutations being a group action.
    """
    violations = []
    S, A = game.num_states, game.num_actions
    for k in range(GROUP_ORDER):
        Ls, Ka = game.state_perm[k], game.action_perm[k]
        # P[L s, K a, L s'] vs P[s, a, s']
        moved = game.P[np.ix_(Ls, Ka, Ls)]
        bad_p = np.unique(np.argwhere(moved != game.P)[:, :2], axis=0)
        for s, a in bad_p:
            violations.append(("transition", int(s), int(a), k))
        bad_r = np.argwhere(game.R[np.ix_(Ls, Ka)] != game.R)
        for s, a in bad_r:
            violations.append(("reward", int(s), int(a), k))
    return AuditReport(S * A * GROUP_ORDER, violations, check_group_axioms(game))
