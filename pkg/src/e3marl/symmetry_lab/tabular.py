"""Exact verification of value and policy symmetry on the C4 gridworld.

Policies are (S, A) row-stochastic matrices over joint actions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.tabular import GROUP_ORDER, TabularGame, audit, inverse
from ..errors import QuotientConstructionError, SymmetryViolationError
from .report import VerificationReport

GAMMA = 0.9
VI_TOL = 1e-12
CHECK_TOL = 1e-10
ARGMAX_TOL = 1e-9


def value_iteration(P: np.ndarray, R: np.ndarray, gamma: float = GAMMA, tol: float = VI_TOL,
                    max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (V*, Q*, iterations); stops once the sup-norm residual is below ``tol``."""
    V = np.zeros(P.shape[0])
    for it in range(1, max_iter + 1):
        Q = R + gamma * P @ V
        V_new = Q.max(axis=1)
        residual = np.max(np.abs(V_new - V))
        V = V_new
        if residual < tol:
            return V, R + gamma * P @ V, it
    raise RuntimeError(f"value iteration did not reach residual {tol} in {max_iter} sweeps")


def policy_values(P, R, pi, gamma: float = GAMMA) -> tuple[np.ndarray, np.ndarray]:
    """Exact V_pi and Q_pi by solving the Bellman linear system."""
    S = P.shape[0]
    P_pi = np.einsum("sa,sat->st", pi, P)
    r_pi = np.sum(pi * R, axis=1)
    V = np.linalg.solve(np.eye(S) - gamma * P_pi, r_pi)
    return V, R + gamma * P @ V


def _require_audit(game: TabularGame) -> None:
    rep = audit(game)
    if not rep.passed:
        first = rep.violations[0] if rep.violations else rep.axiom_problems[0]
        raise SymmetryViolationError(
            f"game fails the symmetry audit ({len(rep.violations)} violations, first "
            f"(kind, s, a, g) = {first}); refusing to verify", rep.violations)


def orbit_canonical(game: TabularGame) -> np.ndarray:
    """Index of the canonical (smallest-index) state in each state's orbit."""
    return game.state_perm.min(axis=0)


def transport_element(game: TabularGame) -> np.ndarray:
    """For every s, some g with L_g[canonical(s)] = s."""
    canon = orbit_canonical(game)
    S = game.num_states
    g_of = np.full(S, -1)
    for k in range(GROUP_ORDER):
        hit = (game.state_perm[k][canon] == np.arange(S)) & (g_of < 0)
        g_of[hit] = k
    return g_of


def stabilizer(game: TabularGame, s: int) -> list[int]:
    return [k for k in range(GROUP_ORDER) if game.state_perm[k][s] == s]


def symmetrize_policy(game: TabularGame, pi: np.ndarray) -> np.ndarray:
    """Group average pi_G(a|s) = mean_g pi(K_g a | L_g s), which is G-invariant."""
    out = np.zeros_like(pi)
    for k in range(GROUP_ORDER):
        Ls, Ka = game.state_perm[k], game.action_perm[k]
        out += pi[np.ix_(Ls, Ka)]
    return out / GROUP_ORDER


def invariant_greedy_policy(game: TabularGame, Q: np.ndarray) -> np.ndarray:
    """Greedy policy with orbit-canonical tie-breaking.

    At a canonical state c the smallest-index optimal action a_c is chosen; any
    other state s = L_g[c] takes K_g[a_c]. When c has a nontrivial stabilizer a
    deterministic choice cannot be invariant, so the policy spreads uniformly
    over {K_h[a_c] : h in Stab(c)}; all of these actions are optimal.
    """
    S, A = Q.shape
    canon = orbit_canonical(game)
    g_of = transport_element(game)
    pi = np.zeros((S, A))
    for s in range(S):
        c, g = canon[s], g_of[s]
        best = np.flatnonzero(Q[c] >= Q[c].max() - ARGMAX_TOL)
        a_c = best[0]
        support = sorted({int(game.action_perm[h][a_c]) for h in stabilizer(game, c)})
        for a in support:
            pi[s, game.action_perm[g][a]] += 1.0 / len(support)
    return pi


def _invariance_errors(game: TabularGame, table: np.ndarray) -> np.ndarray:
    """|T(s, a) - T(L_g s, K_g a)| for all g, s, a (table is (S, A) or (S,))."""
    errs = []
    for k in range(GROUP_ORDER):
        Ls = game.state_perm[k]
        if table.ndim == 1:
            errs.append(np.abs(table - table[Ls]))
        else:
            errs.append(np.abs(table - table[np.ix_(Ls, game.action_perm[k])]))
    return np.stack(errs)


def _sag_label(shape):
    def label(i):
        idx = np.unravel_index(i, shape)
        names = ("g", "s", "a")[:len(idx)]
        return "(" + ", ".join(f"{n}={int(v)}" for n, v in zip(names, idx)) + ")"
    return label


def hand_built_invariant_policies(game: TabularGame, Q: np.ndarray,
                                  rng: np.random.Generator) -> dict[str, np.ndarray]:
    S, A = game.num_states, game.num_actions
    uniform = np.full((S, A), 1.0 / A)
    lazy = np.full((S, A), 0.5 / (A - 1))
    stay = game.actions.index((4, 4))
    lazy[:, stay] = 0.5
    logits = Q / 0.3
    soft = np.exp(logits - logits.max(axis=1, keepdims=True))
    soft /= soft.sum(axis=1, keepdims=True)
    raw = rng.dirichlet(np.ones(A), size=S)
    return {"uniform": uniform, "lazy-stay": lazy, "softmax-Q*": soft,
            "symmetrized-random": symmetrize_policy(game, raw)}


def verify_theorem1_tabular(game: TabularGame, gamma: float = GAMMA, seed: int = 0
                            ) -> VerificationReport:
    """Check (i) Q*-invariance, (ii) an invariant optimal policy, (iii) invariant-policy values."""
    _require_audit(game)
    S, A = game.num_states, game.num_actions
    rep = VerificationReport(f"C4 gridworld n={game.n}: {S} states x {A} joint actions x "
                             f"{GROUP_ORDER} group elements")
    V, Q, iters = value_iteration(game.P, game.R, gamma)
    residual = float(np.max(np.abs((game.R + gamma * game.P @ V).max(axis=1) - V)))
    rep.group("value iteration residual < 1e-12", VI_TOL).record([residual])

    errs = _invariance_errors(game, Q)
    rep.group("(i) Q*(s,a) = Q*(L_g s, K_g a)", CHECK_TOL).record(errs, _sag_label(errs.shape))
    verrs = _invariance_errors(game, V)
    rep.group("(i) V*(s) = V*(L_g s)", CHECK_TOL).record(verrs, _sag_label(verrs.shape))

    pi = invariant_greedy_policy(game, Q)
    perrs = _invariance_errors(game, pi)
    rep.group("(ii) greedy policy is G-invariant", CHECK_TOL).record(perrs, _sag_label(perrs.shape))
    V_pi, _ = policy_values(game.P, game.R, pi, gamma)
    rep.group("(ii) greedy policy attains V*", CHECK_TOL).record(np.abs(V_pi - V),
                                                                _sag_label((S,)))
    support_gap = np.where(pi > 0, Q.max(axis=1, keepdims=True) - Q, 0.0)
    rep.group("(ii) greedy policy only uses optimal actions", ARGMAX_TOL).record(support_gap)

    rng = np.random.default_rng(seed)
    g3 = rep.group("(iii) V_pi(s) = V_pi(L_g s) for invariant pi", CHECK_TOL)
    for name, p in hand_built_invariant_policies(game, Q, rng).items():
        pe = _invariance_errors(game, p)
        g3.record(pe, lambda i, n=name: f"{n} policy not invariant at "
                  + _sag_label(pe.shape)(i))
        Vp, _ = policy_values(game.P, game.R, p, gamma)
        ve = _invariance_errors(game, Vp)
        g3.record(ve, lambda i, n=name: f"{n} " + _sag_label(ve.shape)(i))
    rep.iterations = iters
    return rep


# ---------------------------------------------------------------------------
# quotient game and policy lifting

@dataclass(frozen=True)
class QuotientGame:
    """Abstract game over C4 orbits.

    Abstract actions are numbered globally; ``owner[j]`` is the abstract state
    that action ``j`` belongs to and ``rep_action[j]`` its representative joint
    action at the canonical state.
    """

    canonical: np.ndarray     # (S_bar,) canonical state index per abstract state
    l: np.ndarray             # (S,) abstract state of every state
    k: np.ndarray             # (S, A) abstract action id of every (s, a)
    owner: np.ndarray         # (A_bar,)
    rep_action: np.ndarray    # (A_bar,)
    P: np.ndarray             # (A_bar, S_bar)
    R: np.ndarray             # (A_bar,)

    @property
    def num_states(self) -> int:
        return len(self.canonical)

    @property
    def num_actions(self) -> int:
        return len(self.owner)

    def value_iteration(self, gamma=GAMMA, tol=VI_TOL, max_iter=100_000):
        starts = np.flatnonzero(np.r_[True, self.owner[1:] != self.owner[:-1]])
        V = np.zeros(self.num_states)
        for it in range(1, max_iter + 1):
            Q = self.R + gamma * self.P @ V
            V_new = np.maximum.reduceat(Q, starts)
            residual = np.max(np.abs(V_new - V))
            V = V_new
            if residual < tol:
                return V, self.R + gamma * self.P @ V, it
        raise RuntimeError("abstract value iteration did not converge")

    def policy_values(self, pi_bar: np.ndarray, gamma=GAMMA):
        """``pi_bar`` is a vector over abstract actions summing to 1 per owner."""
        Sb = self.num_states
        P_pi = np.zeros((Sb, Sb))
        np.add.at(P_pi, self.owner, pi_bar[:, None] * self.P)
        r_pi = np.bincount(self.owner, weights=pi_bar * self.R, minlength=Sb)
        V = np.linalg.solve(np.eye(Sb) - gamma * P_pi, r_pi)
        return V, self.R + gamma * self.P @ V


def build_quotient(game: TabularGame) -> QuotientGame:
    S, A = game.num_states, game.num_actions
    canon = orbit_canonical(game)
    canonical = np.unique(canon)
    l = np.searchsorted(canonical, canon)
    g_of = transport_element(game)
    if np.any(g_of < 0):
        raise QuotientConstructionError("no group element maps some canonical state onto "
                                        f"its orbit member: states {np.flatnonzero(g_of < 0)}")
    owner, rep_action = [], []
    orbit_id = {}
    for sb, c in enumerate(canonical):
        stab = stabilizer(game, c)
        for a in range(A):
            rep = min(int(game.action_perm[h][a]) for h in stab)
            if (sb, rep) not in orbit_id:
                orbit_id[(sb, rep)] = len(owner)
                owner.append(sb)
                rep_action.append(rep)
    owner, rep_action = np.array(owner), np.array(rep_action)
    k = np.zeros((S, A), dtype=np.int64)
    for s in range(S):
        c, sb, ginv = canon[s], l[s], inverse(g_of[s])
        stab = stabilizer(game, c)
        for a in range(A):
            a_c = int(game.action_perm[ginv][a])  # pull the action back to the canonical state
            rep = min(int(game.action_perm[h][a_c]) for h in stab)
            k[s, a] = orbit_id[(sb, rep)]
    Sb = len(canonical)
    Pb = np.zeros((len(owner), Sb))
    for j, (sb, a) in enumerate(zip(owner, rep_action)):
        np.add.at(Pb[j], l, game.P[canonical[sb], a])
    Rb = game.R[canonical[owner], rep_action]
    # every member of an abstract (state, action) class must agree on reward
    bad = np.argwhere(game.R != Rb[k])
    if len(bad):
        s, a = bad[0]
        members = np.flatnonzero(canon == canon[s])
        raise QuotientConstructionError(
            f"reward differs inside the orbit class of (s={s}, a={a}); orbit states "
            f"{members.tolist()}, abstract state {l[s]}")
    return QuotientGame(canonical, l, k, owner, rep_action, Pb, Rb)


def lift_policy(q: QuotientGame, pi_bar: np.ndarray) -> np.ndarray:
    """Spread each abstract action's mass uniformly over its preimage k_s^{-1}."""
    S, A = q.k.shape
    pi = np.zeros((S, A))
    for s in range(S):
        ids = q.k[s]
        counts = np.bincount(ids, minlength=q.num_actions)
        pi[s] = pi_bar[ids] / counts[ids]
    return pi


def random_abstract_policy(q: QuotientGame, rng: np.random.Generator) -> np.ndarray:
    w = rng.uniform(0.05, 1.0, size=q.num_actions)
    totals = np.bincount(q.owner, weights=w)
    return w / totals[q.owner]


def uniform_abstract_policy(q: QuotientGame) -> np.ndarray:
    counts = np.bincount(q.owner)
    return 1.0 / counts[q.owner]


def verify_homomorphism_lifting(game: TabularGame, gamma: float = GAMMA, seed: int = 0
                                ) -> VerificationReport:
    _require_audit(game)
    S, A = game.num_states, game.num_actions
    q = build_quotient(game)
    rep = VerificationReport(f"C4 quotient of the n={game.n} gridworld: {S} states -> "
                             f"{q.num_states} orbits, {q.num_actions} abstract actions")

    g = rep.group("surjectivity of l and k_s")
    g.check(set(q.l.tolist()) == set(range(q.num_states)), "l is not onto the abstract states")
    for s in range(S):
        g.check(set(q.k[s].tolist()) == set(np.flatnonzero(q.owner == q.l[s]).tolist()),
                f"k_s is not onto the abstract actions of l(s) at s={s}")
    g = rep.group("orbit invariance of l and k_s")
    for kk in range(GROUP_ORDER):
        Ls, Ka = game.state_perm[kk], game.action_perm[kk]
        g.record((q.l != q.l[Ls]).astype(float), lambda i, kk=kk: f"l, g={kk}, s={i}")
        g.record((q.k != q.k[np.ix_(Ls, Ka)]).astype(float),
                 lambda i, kk=kk: f"k, g={kk}, (s, a)={np.unravel_index(i, (S, A))}")

    rep.group("reward: r(s,a) = r_bar(l(s), k_s(a))", 0.0).record(
        np.abs(game.R - q.R[q.k]), _sag_label((S, A)))
    block = np.zeros((S, A, q.num_states))
    for sb in range(q.num_states):
        block[:, :, sb] = game.P[:, :, q.l == sb].sum(axis=2)
    rep.group("block transition: P([s']|s,a) = P_bar(l(s')|l(s),k_s(a))", 1e-15).record(
        np.abs(block - q.P[q.k]))
    # full observability: o is the identity, h_s = l and o_bar is the identity
    rep.group("observation: o_bar(l(s)) = h_s(o(s))", 0.0).record(
        np.zeros(S) + (q.l != q.l[np.arange(S)]))

    V, Q, _ = value_iteration(game.P, game.R, gamma)
    Vb, Qb, _ = q.value_iteration(gamma)
    rep.group("optimal values: V*(s) = V_bar*(l(s))", CHECK_TOL).record(np.abs(V - Vb[q.l]))
    rep.group("optimal values: Q*(s,a) = Q_bar*(l(s),k_s(a))", CHECK_TOL).record(
        np.abs(Q - Qb[q.k]), _sag_label((S, A)))

    rng = np.random.default_rng(seed)
    g_lift = rep.group("lift condition: sum over k_s^-1(a_bar) of pi_lift = pi_bar", 1e-14)
    g_val = rep.group("lifted values: V_lift(s) = V_bar(l(s)), Q likewise", CHECK_TOL)
    for name, pi_bar in (("random", random_abstract_policy(q, rng)),
                         ("uniform", uniform_abstract_policy(q))):
        pi = lift_policy(q, pi_bar)
        mass = np.zeros((S, q.num_actions))
        for s in range(S):
            mass[s] = np.bincount(q.k[s], weights=pi[s], minlength=q.num_actions)
        own = q.owner[None, :] == q.l[:, None]
        g_lift.record(np.abs(np.where(own, mass - pi_bar[None, :], 0.0)))
        Vl, Ql = policy_values(game.P, game.R, pi, gamma)
        Vbp, Qbp = q.policy_values(pi_bar, gamma)
        g_val.record(np.abs(Vl - Vbp[q.l]), lambda i, n=name: f"{n} lift, V at s={i}")
        g_val.record(np.abs(Ql - Qbp[q.k]), lambda i, n=name: f"{n} lift, Q at "
                     + _sag_label((S, A))(i))
    g = rep.group("fixed points: states fixed by all of C4 form singleton orbits")
    for s in range(S):
        if len(stabilizer(game, s)) == GROUP_ORDER:
            g.check(int(np.sum(q.l == q.l[s])) == 1, f"state {s} is fixed but shares an orbit")
    rep.quotient = q
    return rep
