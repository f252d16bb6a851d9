import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e3marl import autodiff as ad
from e3marl.envs.navigation import StateBatch, nav_observe, nav_reset, observe_all
from e3marl.errors import ArchitectureIncompatibleError, InvalidArgumentError, ShapeError, SpecError
from e3marl.graph_builder import build_observation_graph, build_state_action_graph
from e3marl.group import IrrepSpec, SteerableVector, random_element, rotation_z, translation
from e3marl.nn.baselines import HIDDEN_SIZE, MLP, GCNCritic, MLPActor, MLPCritic, mlp_forward
from e3marl.nn.graph import EuclideanGraph, batch_graphs, merge_features, split_features
from e3marl.nn.policies import make_actor, make_critic
from e3marl.nn.segnn import (
    E3MPLayer,
    SEGNNActor,
    SEGNNCritic,
    actor_forward,
    critic_forward,
    e3mp_forward,
    gated_nonlinearity,
    squash_norm,
)
from e3marl.optim import SGD, Adam, clip_grad_norm, make_optimizer

SPEC = IrrepSpec.parse("2x0e+2x1o")
ATTR = IrrepSpec.parse("2x0e")
EDGE = IrrepSpec.parse("1x1o")


def random_graph(rng, n=6):
    pos = rng.uniform(-2, 2, (n, 3))
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    edges = np.stack([i, j], axis=1)
    attrs = np.eye(2)[rng.integers(0, 2, n)]
    return EuclideanGraph(pos, edges, SPEC, rng.standard_normal((n, SPEC.dim)), ATTR, attrs,
                          EDGE, pos[edges[:, 0]] - pos[edges[:, 1]])


def random_state(rng, n=3):
    s = nav_reset(n, rng)
    vel = np.zeros_like(s.velocities)
    vel[:n, :2] = rng.uniform(-1, 1, (n, 2))
    return type(s)(s.positions, vel, n, 0)


def test_split_merge_roundtrip(rng):
    data = rng.standard_normal((4, SPEC.dim))
    s, v = split_features(SPEC, data)
    assert s.shape == (4, 2) and v.shape == (4, 3, 2)
    spec, back = merge_features(s, v)
    assert spec == SPEC and np.array_equal(back, data)


def test_graph_validation(rng):
    g = random_graph(rng, 3)
    with pytest.raises(InvalidArgumentError):
        EuclideanGraph(g.positions, np.array([[0, 0]]), SPEC, g.node_features, ATTR,
                       g.node_attributes, EDGE, np.zeros((1, 3)))
    with pytest.raises(SpecError):
        EuclideanGraph(g.positions, g.edges, SPEC, g.node_features[:, :3], ATTR,
                       g.node_attributes, EDGE, g.edge_attributes)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_e3mp_equivariance(seed):
    rng = np.random.default_rng(seed)
    layer = E3MPLayer(2, 2, 4, 3, 2, rng)
    g = random_graph(rng)
    el = random_element(rng)
    lhs = e3mp_forward(layer, g.transform(el))
    rhs = e3mp_forward(layer, g).transform(el)
    assert np.max(np.abs(lhs.node_features - rhs.node_features)) < 1e-9
    assert np.allclose(lhs.positions, rhs.positions)


def test_e3mp_translation_bit_level(rng):
    layer = E3MPLayer(2, 2, 4, 3, 2, rng)
    g = random_graph(rng)
    a = e3mp_forward(layer, g).node_features
    b = e3mp_forward(layer, g.transform(translation([5, -2, 7]))).node_features
    assert np.max(np.abs(a - b)) < 1e-12


def test_e3mp_single_vertex(rng):
    layer = E3MPLayer(2, 2, 4, 3, 2, rng)
    g = EuclideanGraph(np.zeros((1, 3)), np.zeros((0, 2)), SPEC, rng.standard_normal((1, SPEC.dim)),
                       ATTR, np.array([[1.0, 0]]), EDGE, np.zeros((0, 3)))
    out = e3mp_forward(layer, g)
    assert np.all(np.isfinite(out.node_features))


def test_e3mp_spec_mismatch(rng):
    layer = E3MPLayer(3, 2, 4, 3, 2, rng)
    with pytest.raises(SpecError):
        e3mp_forward(layer, random_graph(rng))


def test_gated_nonlinearity_examples(rng):
    spec = IrrepSpec.parse("3x0e+2x1o")
    zero = gated_nonlinearity(SteerableVector(spec, np.zeros(spec.dim)))
    assert np.array_equal(zero.data, np.zeros(zero.spec.dim))
    assert str(zero.spec) == "1x0e+2x1o"
    x = SteerableVector(spec, rng.standard_normal(spec.dim))
    y = gated_nonlinearity(x)
    vin, vout = x.data[3:].reshape(2, 3), y.data[1:].reshape(2, 3)
    for a, b in zip(vin, vout):
        assert np.allclose(np.cross(a, b), 0, atol=1e-12) and a @ b > 0
    el = random_element(rng)
    lhs = gated_nonlinearity(x.transform(el)).data
    assert np.max(np.abs(lhs - y.transform(el).data)) < 1e-12
    with pytest.raises(SpecError):
        gated_nonlinearity(SteerableVector(IrrepSpec.parse("1x0e+2x1o"), np.zeros(7)))


def _critic_graph(rng):
    s = random_state(rng)
    a = np.zeros((3, 3))
    a[:, :2] = rng.uniform(-0.5, 0.5, (3, 2))
    return build_state_action_graph(s, a)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_critic_invariance(seed):
    rng = np.random.default_rng(seed)
    net = SEGNNCritic(2, 2, 2, 8, 4, 2, rng)
    g = _critic_graph(rng)
    el = random_element(rng)
    assert abs(critic_forward(net, g) - critic_forward(net, g.transform(el))) < 1e-9


def test_critic_zero_weights_gives_bias(rng):
    net = SEGNNCritic(2, 2, 2, 8, 4, 2, rng)
    for p in net.parameters():
        p.data[...] = 0.0
    net.readout.b.data[...] = 0.37
    for _ in range(3):
        assert critic_forward(net, _critic_graph(rng)) == pytest.approx(0.37, abs=1e-15)


def test_critic_permutation_of_identical_vertices(rng):
    net = SEGNNCritic(2, 2, 2, 8, 4, 2, rng)
    g = _critic_graph(rng)
    # swap two landmarks: same type, zero velocity and action
    perm = np.array([0, 1, 2, 4, 3, 5])
    inv = np.argsort(perm)
    edges = inv[g.edges]
    h = EuclideanGraph(g.positions[perm], edges, g.node_feature_spec, g.node_features[perm],
                       g.node_attribute_spec, g.node_attributes[perm], g.edge_attribute_spec,
                       g.positions[perm][edges[:, 0]] - g.positions[perm][edges[:, 1]])
    assert abs(critic_forward(net, g) - critic_forward(net, h)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_actor_equivariance(seed):
    rng = np.random.default_rng(seed)
    net = SEGNNActor(1, 1, 3, 8, 4, 2, rng)
    g, me = build_observation_graph(nav_observe(random_state(rng), 1))
    el = random_element(rng)
    lhs = actor_forward(net, g.transform(el), me)
    rhs = el.apply_vectors(actor_forward(net, g, me))
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_actor_zero_weights_gives_zero_action(rng):
    net = SEGNNActor(1, 1, 3, 8, 4, 2, rng)
    for p in net.parameters():
        p.data[...] = 0.0
    g, me = build_observation_graph(nav_observe(random_state(rng), 0))
    assert np.array_equal(actor_forward(net, g, me), np.zeros(3))


def test_actor_planar_output(rng):
    net = SEGNNActor(1, 1, 3, 8, 4, 2, rng)
    for _ in range(5):
        g, me = build_observation_graph(nav_observe(random_state(rng), 2))
        a = actor_forward(net, g, me)
        assert abs(a[2]) < 1e-12 and np.linalg.norm(a[:2]) > 0


def test_actor_bad_self_vertex(rng):
    net = SEGNNActor(1, 1, 3, 8, 4, 2, rng)
    g, _ = build_observation_graph(nav_observe(random_state(rng), 0))
    with pytest.raises(InvalidArgumentError):
        actor_forward(net, g, 99)


def test_batched_matches_single(rng):
    net = SEGNNActor(1, 1, 3, 8, 4, 2, rng)
    states = [random_state(rng) for _ in range(4)]
    single = [actor_forward(net, *build_observation_graph(nav_observe(s, i)))
              for s in states for i in range(3)]
    actor = make_actor("SEGNN", 3, rng, hidden_s=8, hidden_v=4)
    actor.net = net
    with ad.no_grad():
        batched = actor.act(observe_all(StateBatch.stack(states))).data
    assert np.allclose(batched, np.array(single), atol=1e-13)


def test_squash_norm_bounds_and_direction(rng):
    a = rng.standard_normal((50, 3)) * 5
    out = squash_norm(ad.Tensor(a), 1.0).data
    n = np.linalg.norm(out, axis=1)
    assert np.all(n < 1.0)
    assert np.allclose(np.cross(a, out), 0, atol=1e-12)
    assert np.array_equal(squash_norm(ad.Tensor(np.zeros((1, 3))), 1.0).data, np.zeros((1, 3)))


def test_mlp_identity_passthrough():
    net = MLP([4, 4])
    net.weights[0].data[...] = np.eye(4)
    x = np.arange(4.0)
    assert np.array_equal(mlp_forward(net, x), x)
    with pytest.raises(ShapeError):
        net(np.zeros(5))


def test_default_hidden_size():
    assert HIDDEN_SIZE == 128
    actor = make_actor("MLP", 3, np.random.default_rng(0))
    assert actor.net.sizes[1] == 128


def test_mlp_actor_fixed_agent_count(rng):
    actor = MLPActor(3, rng=rng)
    obs = observe_all(StateBatch.stack([random_state(rng, 4)]))
    with pytest.raises(ArchitectureIncompatibleError):
        actor.act(obs)
    critic = MLPCritic(3, rng=rng)
    with pytest.raises(ArchitectureIncompatibleError):
        critic.q(StateBatch.stack([random_state(rng, 4)]), np.zeros((1, 4, 3)))


def test_mlp_and_gcn_not_invariant(rng):
    s = StateBatch.stack([random_state(rng)])
    a = rng.uniform(-0.5, 0.5, (1, 3, 3))
    a[..., 2] = 0
    el = rotation_z(1.0)
    s2 = StateBatch(el.apply_points(s.positions), el.apply_vectors(s.velocities), 3)
    a2 = el.apply_vectors(a)
    for critic in (MLPCritic(3, rng=rng), GCNCritic(rng=rng)):
        with ad.no_grad():
            q1, q2 = critic.q(s, a).data, critic.q(s2, a2).data
        assert abs(q1 - q2).item() > 1e-6


def test_unknown_architectures(rng):
    with pytest.raises(InvalidArgumentError):
        make_actor("GCN", 3, rng)
    with pytest.raises(InvalidArgumentError):
        make_critic("CNN", 3, rng)


def test_module_state_and_soft_update(tmp_path, rng):
    net = SEGNNCritic(2, 2, 2, 8, 4, 1, rng)
    tgt = net.clone()
    assert all(a is not b for a, b in zip(net.parameters(), tgt.parameters()))
    for p in net.parameters():
        p.data += 1.0
    tgt.soft_update_from(net, 1.0)
    for a, b in zip(net.parameters(), tgt.parameters()):
        assert np.array_equal(a.data, b.data)
    net.save(tmp_path / "c.npz")
    other = SEGNNCritic(2, 2, 2, 8, 4, 1, np.random.default_rng(99))
    other.load(tmp_path / "c.npz")
    for a, b in zip(net.parameters(), other.parameters()):
        assert a.data.tobytes() == b.data.tobytes()


def test_soft_update_interpolates():
    a, b = MLP([2, 2], np.random.default_rng(0)), MLP([2, 2], np.random.default_rng(1))
    wa, wb = a.weights[0].data.copy(), b.weights[0].data.copy()
    a.soft_update_from(b, 0.25)
    assert np.allclose(a.weights[0].data, 0.75 * wa + 0.25 * wb)


def test_optimizers():
    p = ad.Parameter(np.array([1.0, -2.0]))
    p.grad[...] = [1.0, 1.0]
    SGD([p], 0.0).step()
    assert np.array_equal(p.data, [1.0, -2.0])
    SGD([p], 0.1, momentum=0.0).step()
    assert np.allclose(p.data, [0.9, -2.1])
    q = ad.Parameter(np.zeros(2))
    q.grad[...] = [3.0, -0.5]
    Adam([q], 0.01).step()
    assert np.allclose(q.data, [-0.01, 0.01])
    with pytest.raises(InvalidArgumentError):
        make_optimizer("rmsprop", [p], 0.1)


def test_clip_grad_norm():
    p = ad.Parameter(np.zeros(2))
    p.grad[...] = [3.0, 4.0]
    assert clip_grad_norm([p], 1.0) == pytest.approx(5.0)
    assert np.allclose(p.grad, [0.6, 0.8])


def test_critic_loss_gradient_matches_finite_differences(rng):
    net = SEGNNCritic(2, 2, 2, 4, 2, 1, rng)
    batch = batch_graphs([_critic_graph(rng) for _ in range(3)])
    y = rng.standard_normal(3)

    def loss():
        err = net(batch) - y
        return ad.mean(err * err)

    ad.backward(loss())
    h = 1e-6
    for p in net.parameters():
        flat = p.data.reshape(-1)
        for k in rng.choice(flat.size, min(4, flat.size), replace=False):
            old = flat[k]
            flat[k] = old + h
            with ad.no_grad():
                hi = loss().item()
            flat[k] = old - h
            with ad.no_grad():
                lo = loss().item()
            flat[k] = old
            num = (hi - lo) / (2 * h)
            assert abs(num - p.grad.reshape(-1)[k]) <= 1e-5 * max(1.0, abs(num))
