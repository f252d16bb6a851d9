"""Randomized equivariance checks for every symmetry-carrying operation.

Each check samples group elements from three families in turn: proper
rotations, rotations composed with the xy-mirror, and either of those with a
translation. Errors are absolute, in float64.
"""
from __future__ import annotations

import numpy as np

from ..envs.navigation import (
    NavConfig,
    apply_group_to_action,
    apply_group_to_observation,
    apply_group_to_state,
    nav_observe,
    nav_reset,
    nav_step,
)
from ..graph_builder import GraphConfig, build_observation_graph, build_state_action_graph
from ..group import (
    GroupElement,
    IrrepSpec,
    SteerableVector,
    cg_tensor_product,
    random_element,
    spherical_harmonics_l1,
    transform_steerable,
)
from ..nn.segnn import E3MPLayer, SEGNNActor, SEGNNCritic, actor_forward, critic_forward, e3mp_forward
from .report import VerificationReport

EQUIVARIANCE_TOL = 1e-9
MIXED_SPEC = IrrepSpec.parse("2x0e+1x0o+2x1o+1x1e")


def sample_elements(rng: np.random.Generator, count: int) -> list[GroupElement]:
    out = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            out.append(random_element(rng, reflect=False, translate=0.0))
        elif kind == 1:
            out.append(random_element(rng, reflect=True, translate=0.0))
        else:
            out.append(random_element(rng, translate=5.0))
    return out


def _random_state(rng, num_agents=3, speed=0.5):
    s = nav_reset(num_agents, rng)
    vel = np.zeros_like(s.velocities)
    vel[:num_agents, :2] = rng.uniform(-speed, speed, (num_agents, 2))
    return type(s)(s.positions, vel, num_agents, s.t)


def _random_actions(rng, num_agents=3):
    a = np.zeros((num_agents, 3))
    a[:, :2] = rng.uniform(-0.7, 0.7, (num_agents, 2))
    return a


def _graph_error(a, b) -> float:
    return max(float(np.max(np.abs(a.positions - b.positions), initial=0.0)),
               float(np.max(np.abs(a.node_features - b.node_features), initial=0.0)),
               float(np.max(np.abs(a.node_attributes - b.node_attributes), initial=0.0)),
               float(np.max(np.abs(a.edge_attributes - b.edge_attributes), initial=0.0)),
               0.0 if np.array_equal(a.edges, b.edges) else np.inf)


def equivariance_battery(num_elements: int = 100, seed: int = 0, hidden_s: int = 16,
                         hidden_v: int = 4, graph: GraphConfig | None = None
                         ) -> VerificationReport:
    rng = np.random.default_rng(seed)
    graph = graph or GraphConfig()
    rep = VerificationReport(f"equivariance battery: {num_elements} group elements per operation")
    elements = sample_elements(rng, num_elements)
    tol = EQUIVARIANCE_TOL

    grp = rep.group("transform_steerable: D(g1) D(g2) = D(g1 g2)", tol)
    for g in elements:
        h = sample_elements(rng, 3)[int(rng.integers(3))]
        v = SteerableVector(MIXED_SPEC, rng.standard_normal(MIXED_SPEC.dim))
        lhs = transform_steerable(transform_steerable(v, h), g).data
        rhs = transform_steerable(v, g @ h).data
        grp.record([np.max(np.abs(lhs - rhs))])

    grp = rep.group("spherical_harmonics_l1: Y(R d) = D(g) Y(d)", tol)
    for g in elements:
        d = rng.standard_normal(3)
        lhs = spherical_harmonics_l1(g.apply_vectors(d)).data
        rhs = transform_steerable(spherical_harmonics_l1(d), g).data
        grp.record([np.max(np.abs(lhs - rhs))])

    grp = rep.group("cg_tensor_product: CG(D a, D b) = D CG(a, b)", tol)
    spec_a, spec_b = IrrepSpec.parse("2x0e+2x1o"), IrrepSpec.parse("1x0e+1x1o+1x1e")
    out_spec = IrrepSpec.parse("2x0e+1x0o+2x1o+2x1e")
    paths = [(0, 0, 0), (0, 1, 2), (1, 0, 2), (1, 1, 0), (1, 1, 3), (1, 2, 1), (0, 2, 3)]
    for g in elements:
        w = {p: rng.standard_normal((spec_a.blocks[p[0]][0], spec_b.blocks[p[1]][0],
                                     out_spec.blocks[p[2]][0])) for p in paths}
        a = SteerableVector(spec_a, rng.standard_normal(spec_a.dim))
        b = SteerableVector(spec_b, rng.standard_normal(spec_b.dim))
        lhs = cg_tensor_product(transform_steerable(a, g), transform_steerable(b, g), out_spec, w)
        rhs = transform_steerable(cg_tensor_product(a, b, out_spec, w), g)
        grp.record([np.max(np.abs(lhs.data - rhs.data))])

    net_rng = np.random.default_rng(seed + 1)
    layer = E3MPLayer(2, 2, hidden_s, hidden_v, 2, net_rng, residual=False)
    actor = SEGNNActor(1, 1, 3, hidden_s, hidden_v, 2, net_rng)
    critic = SEGNNCritic(2, 2, 2, hidden_s, hidden_v, 2, net_rng)
    nav = NavConfig(num_agents=3)

    g_sa = rep.group("build_state_action_graph: G(L_g s, K_g a) = T_g G(s, a)", tol)
    g_ob = rep.group("build_observation_graph: G(H_g o) = T_g G(o)", tol)
    g_mp = rep.group("e3mp_forward: layer(T_g G) = T_g layer(G)", tol)
    g_ac = rep.group("actor_forward: actor(T_g G) = R actor(G)", tol)
    g_cr = rep.group("critic_forward: critic(T_g G) = critic(G)", tol)
    g_st = rep.group("nav_step: step(L_g s, K_g a) = (L_g s', r)", tol)
    g_os = rep.group("nav_observe: o(L_g s) = H_g o(s)", tol)
    for g in elements:
        s, a = _random_state(rng), _random_actions(rng)
        gs, ga = apply_group_to_state(g, s), apply_group_to_action(g, a)
        G = build_state_action_graph(s, a, graph)
        Gg = build_state_action_graph(gs, ga, graph)
        g_sa.record([_graph_error(Gg, G.transform(g))])

        i = int(rng.integers(3))
        o = nav_observe(s, i, nav)
        og = nav_observe(gs, i, nav)
        g_os.record([max(np.max(np.abs(og.rel_positions
                                       - apply_group_to_observation(g, o).rel_positions)),
                         np.max(np.abs(og.velocities
                                       - apply_group_to_observation(g, o).velocities)))])
        Go, vo = build_observation_graph(o, graph)
        Gog, _ = build_observation_graph(apply_group_to_observation(g, o), graph)
        rot = g.without_translation()
        g_ob.record([_graph_error(Gog, Go.transform(rot))])

        out, out_g = e3mp_forward(layer, G), e3mp_forward(layer, G.transform(g))
        g_mp.record([_graph_error(out_g, out.transform(g))])

        act = actor_forward(actor, Go, vo)
        act_g = actor_forward(actor, Go.transform(g), vo)
        g_ac.record([np.max(np.abs(act_g - g.apply_vectors(act)))])
        g_cr.record([abs(critic_forward(critic, G.transform(g)) - critic_forward(critic, G))])

        s1, r1, d1 = nav_step(s, a, nav)
        s2, r2, d2 = nav_step(gs, ga, nav)
        expect = apply_group_to_state(g, s1)
        g_st.record([max(np.max(np.abs(s2.positions - expect.positions)),
                         np.max(np.abs(s2.velocities - expect.velocities)), abs(r1 - r2),
                         0.0 if d1 == d2 else np.inf)])
    return rep
