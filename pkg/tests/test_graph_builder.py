import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e3marl.envs.navigation import (
    PointCloudState,
    StateBatch,
    apply_group_to_action,
    apply_group_to_observation,
    apply_group_to_state,
    nav_observe,
    nav_reset,
    observe_all,
)
from e3marl.errors import InvalidArgumentError
from e3marl.graph_builder import (
    GraphConfig,
    build_observation_graph,
    build_state_action_graph,
    complete_edges,
    knn_edges,
    observation_batch,
    stable_norm,
    state_action_batch,
)
from e3marl.group import random_element, rotation_from_euler

seeds = st.integers(0, 2**32 - 1)


def moving_state(rng, n=3):
    s = nav_reset(n, rng)
    vel = np.zeros_like(s.velocities)
    vel[:n, :2] = rng.uniform(-1, 1, (n, 2))
    return PointCloudState(s.positions, vel, n, 0)


def edge_set(edges):
    return {tuple(e) for e in np.asarray(edges).tolist()}


def test_state_action_graph_shape(rng):
    s = moving_state(rng)
    a = rng.uniform(-0.5, 0.5, (3, 3))
    g = build_state_action_graph(s, a)
    assert g.num_vertices == 6 and len(g.edges) == 30
    assert str(g.node_feature_spec) == "1x1o+1x0e+1x1o+1x0e"
    assert np.array_equal(g.node_features[3:, 4:], np.zeros((3, 4)))
    assert np.allclose(g.node_features[:3, 4:7], a)


def test_state_action_graph_needs_actions(rng):
    s = moving_state(rng)
    with pytest.raises(InvalidArgumentError):
        build_state_action_graph(s, None)
    with pytest.raises(InvalidArgumentError):
        build_state_action_graph(s, np.zeros((2, 3)))


@settings(max_examples=50)
@given(seeds)
def test_state_action_graph_commutes_with_group(seed):
    rng = np.random.default_rng(seed)
    s = moving_state(rng)
    a = rng.uniform(-0.5, 0.5, (3, 3))
    el = random_element(rng)
    built = build_state_action_graph(apply_group_to_state(el, s), apply_group_to_action(el, a))
    moved = build_state_action_graph(s, a).transform(el)
    assert np.array_equal(built.edges, moved.edges)
    assert np.max(np.abs(built.node_features - moved.node_features)) < 1e-12
    assert np.max(np.abs(built.edge_attributes - moved.edge_attributes)) < 1e-12


def test_observation_graph_partial_velocities(rng):
    s = moving_state(rng)
    g, me = build_observation_graph(nav_observe(s, 1))
    assert me == 1
    vel = g.node_features[:, :3]
    assert np.allclose(vel[1], s.velocities[1])
    assert np.array_equal(np.delete(vel, 1, axis=0), np.zeros((5, 3)))
    assert g.node_attributes[1].tolist() == [1.0, 0.0, 1.0]


@settings(max_examples=50)
@given(seeds)
def test_observation_graph_commutes_with_group(seed):
    rng = np.random.default_rng(seed)
    s = moving_state(rng)
    el = random_element(rng)
    o = nav_observe(s, 0)
    built, _ = build_observation_graph(apply_group_to_observation(el, o))
    moved = build_observation_graph(o)[0].transform(el.without_translation())
    assert np.max(np.abs(built.node_features - moved.node_features)) < 1e-12


def test_knn_collinear_example():
    pos = np.array([[0.0, 0, 0], [1, 0, 0], [3, 0, 0]])
    assert edge_set(knn_edges(pos, 1)) == {(0, 1), (1, 0), (2, 1)}


def test_knn_out_degree(rng):
    s = moving_state(rng)
    g, _ = build_observation_graph(nav_observe(s, 0), GraphConfig("knn", 2))
    assert np.array_equal(np.bincount(g.edges[:, 0], minlength=6), np.full(6, 2))


def test_complete_equals_knn_full(rng):
    pos = rng.standard_normal((5, 3))
    assert edge_set(knn_edges(pos, 4)) == edge_set(complete_edges(5))


@settings(max_examples=30)
@given(seeds)
def test_knn_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    pos = rng.standard_normal((7, 3))
    R = rotation_from_euler(*rng.uniform(0, 2 * np.pi, 3)).rotation
    assert edge_set(knn_edges(pos, 3)) == edge_set(knn_edges(pos @ R.T, 3))


def test_knn_bad_k(rng):
    with pytest.raises(InvalidArgumentError):
        knn_edges(rng.standard_normal((3, 3)), 3)
    with pytest.raises(InvalidArgumentError):
        GraphConfig("knn", 0)
    with pytest.raises(InvalidArgumentError):
        GraphConfig("radius")


def test_stable_norm_zero_at_origin():
    assert stable_norm(np.zeros(3)) == 0.0
    assert stable_norm(np.array([3.0, 4.0, 0.0])) == pytest.approx(5.0, abs=1e-5)


@pytest.mark.parametrize("cfg", [GraphConfig(), GraphConfig("knn", 2)])
def test_batched_builders_match_single(rng, cfg):
    states = [moving_state(rng) for _ in range(3)]
    actions = rng.uniform(-0.5, 0.5, (3, 3, 3))
    sb = state_action_batch(StateBatch.stack(states), actions, cfg)
    singles = [build_state_action_graph(s, a, cfg) for s, a in zip(states, actions)]
    assert len(sb.senders) == sum(len(g.edges) for g in singles)
    first = singles[0]
    feats = sb.scalars.data[:6], sb.vectors.data[:6]
    assert np.allclose(feats[0][:, 0], first.node_features[:, 3])
    assert np.allclose(feats[1][:, :, 1], first.node_features[:, 4:7])
    ob = observation_batch(observe_all(StateBatch.stack(states)), cfg)
    assert ob.num_graphs == 9
    assert ob.self_index.tolist() == [(3 * b + i) * 6 + i for b in range(3) for i in range(3)]
