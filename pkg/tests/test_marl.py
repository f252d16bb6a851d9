import numpy as np
import pytest
from scipy import stats

from e3marl import autodiff as ad
from e3marl.envs.navigation import NavConfig, PointCloudState, StateBatch, nav_reset, step_batch
from e3marl.errors import ArchitectureIncompatibleError, ConfigError, DivergenceError, InvalidArgumentError
from e3marl.marl.buffer import ReplayBuffer, Transition, sample_batch, sample_indices
from e3marl.marl.checkpoint import load_checkpoint, save_checkpoint
from e3marl.marl.config import TrainingConfig
from e3marl.marl.evaluation import (
    evaluate,
    evaluate_policy,
    evaluate_random,
    initial_states,
    rollout,
    sample_on_policy_states,
    zero_shot_eval,
)
from e3marl.marl.maddpg import MADDPG, maddpg_train, nav_config_for, td_target
from e3marl.marl.policies import (
    actor_policy,
    exploration_noise,
    heuristic_policy,
    random_policy,
    zero_policy,
)

TINY = dict(hidden_s=8, hidden_v=4, mlp_hidden=16, batch_size=16, warmup_transitions=32,
            num_envs=4, episode_length=5, invariancy_states=4)


def filled_buffer(n=3, steps=6, envs=4, seed=0):
    rng = np.random.default_rng(seed)
    buf = ReplayBuffer(500, n)
    cfg = NavConfig(num_agents=n)
    st = StateBatch.stack([nav_reset(n, rng) for _ in range(envs)])
    pos, vel = st.positions, st.velocities
    for _ in range(steps):
        a = np.zeros((envs, n, 3))
        a[..., :2] = rng.uniform(-0.5, 0.5, (envs, n, 2))
        s = StateBatch(pos, vel, n)
        pos, vel, r = step_batch(pos, vel, a, cfg)
        buf.add_batch(s, a, r, StateBatch(pos, vel, n), np.zeros(envs, bool))
    return buf


def test_td_target_example():
    assert td_target(1.0, 0.0, 2.0, 0.95) == pytest.approx(2.9)
    assert td_target(1.0, 1.0, 2.0, 0.95) == 1.0


def test_config_defaults_and_validation():
    cfg = TrainingConfig()
    assert (cfg.gamma, cfg.episode_length, cfg.batch_size) == (0.95, 25, 64)
    assert cfg.name == "[SEGNN, SEGNN]"
    with pytest.raises(ConfigError) as err:
        TrainingConfig(gamma=1.5)
    assert err.value.field == "gamma"
    with pytest.raises(ConfigError):
        TrainingConfig(actor_arch="GCN")
    assert cfg.noise_at(0) == cfg.noise_start
    assert cfg.noise_at(cfg.episodes) == pytest.approx(cfg.noise_end)


def test_buffer_ring_and_transition():
    buf = ReplayBuffer(5, 1)
    for i in range(7):
        tr = Transition(np.full((2, 3), i, float), np.zeros((2, 3)), np.zeros((1, 3)), float(i),
                        np.zeros((2, 3)), np.zeros((2, 3)), False)
        buf.add(tr)
    assert len(buf) == 5
    assert sorted(buf.rew.tolist()) == [2, 3, 4, 5, 6]
    assert buf.transition(0).reward == 5.0
    with pytest.raises(InvalidArgumentError):
        ReplayBuffer(0, 1)


def test_sample_batch_contract():
    buf = filled_buffer()
    n = len(buf)
    assert sample_batch(buf, n + 1, np.random.default_rng(0)) is None
    idx = sample_indices(n, n, np.random.default_rng(0))
    assert sorted(idx.tolist()) == list(range(n))
    a = sample_batch(buf, 8, np.random.default_rng(3))
    b = sample_batch(buf, 8, np.random.default_rng(3))
    assert np.array_equal(a.actions, b.actions)
    assert a.observations.size == 8 * 3


def test_sampling_frequencies_uniform():
    rng = np.random.default_rng(0)
    size, draws = 20, 100_000
    counts = np.zeros(size)
    for _ in range(draws // 5):
        counts[sample_indices(size, 5, rng)] += 1
    expected = draws / size
    assert np.all(np.abs(counts - expected) < 3 * np.sqrt(expected)) or \
        stats.chisquare(counts).pvalue > 1e-3


def test_exploration_noise():
    rng = np.random.default_rng(0)
    a = np.array([[0.3, -0.2, 0.0]])
    assert np.array_equal(exploration_noise(a, 0.0, rng), a)
    noisy = exploration_noise(np.zeros((100_000, 3)), 0.3, rng)
    assert np.all(np.linalg.norm(noisy, axis=1) <= 1.0 + 1e-12)
    assert np.all(noisy[:, 2] == 0)
    cov = np.cov(noisy[:, :2].T)
    assert abs(cov[0, 0] / cov[1, 1] - 1) < 0.05 and abs(cov[0, 1]) < 0.05 * cov[0, 0]
    with pytest.raises(InvalidArgumentError):
        exploration_noise(a, -1.0, rng)


def test_evaluation_deterministic_and_ordered():
    cfg = NavConfig(num_agents=3)
    r1 = evaluate_random(cfg, 10, 5).returns
    r2 = evaluate_random(cfg, 10, 5).returns
    assert np.array_equal(r1, r2)
    zero = evaluate_policy(zero_policy, cfg, 10, 5)
    heur = evaluate_policy(heuristic_policy(), cfg, 10, 5)
    assert heur.mean_return > zero.mean_return
    assert (evaluate_random(cfg, 10, 5).mean_return > zero.mean_return) == \
        (evaluate_random(cfg, 10, 5).mean_return > zero.mean_return)


def test_landmark_under_agent_costs_nothing():
    cfg = NavConfig(num_agents=1, episode_length=4)
    start = StateBatch(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)), 1)
    returns, _ = rollout(zero_policy, cfg, start)
    assert returns[0] == 0.0


def test_random_policy_in_disk():
    pol = random_policy(np.random.default_rng(0), 0.5)
    from e3marl.envs.navigation import observe_all
    a = pol(observe_all(initial_states(NavConfig(), 100, 0)))
    assert np.all(np.linalg.norm(a, axis=1) <= 0.5) and np.all(a[:, 2] == 0)


def test_zero_shot():
    agent = MADDPG(TrainingConfig(**TINY), np.random.default_rng(0))
    res = zero_shot_eval(agent.actor, 6, 4, 0)
    assert np.isfinite(res.mean_return) and len(res.returns) == 4
    mlp = MADDPG(TrainingConfig(actor_arch="MLP", critic_arch="MLP", **TINY))
    with pytest.raises(ArchitectureIncompatibleError):
        zero_shot_eval(mlp.actor, 6, 4, 0)


def test_on_policy_state_sample():
    cfg = NavConfig(num_agents=2, episode_length=6)
    s = sample_on_policy_states(heuristic_policy(), cfg, 7, np.random.default_rng(0))
    assert s.size == 7 and s.num_entities == 4


def test_soft_update_tau_one_copies():
    agent = MADDPG(TrainingConfig(tau=1.0, **TINY), np.random.default_rng(0))
    buf = filled_buffer()
    batch = sample_batch(buf, 16, np.random.default_rng(0))
    agent.update(batch, np.zeros(16, dtype=int))
    for a, b in zip(agent.actor.parameters(), agent.target_actor.parameters()):
        assert np.array_equal(a.data, b.data)
    for a, b in zip(agent.critic.parameters(), agent.target_critic.parameters()):
        assert np.array_equal(a.data, b.data)


@pytest.mark.parametrize("optimizer", ["sgd", "adam"])
def test_zero_learning_rates_freeze_parameters(optimizer):
    agent = MADDPG(TrainingConfig(actor_lr=0.0, critic_lr=0.0, optimizer=optimizer, **TINY),
                   np.random.default_rng(0))
    before = [p.data.copy() for p in agent.actor.parameters() + agent.critic.parameters()]
    buf = filled_buffer()
    rng = np.random.default_rng(1)
    for _ in range(3):
        agent.update(sample_batch(buf, 16, rng), rng.integers(0, 3, 16))
    after = agent.actor.parameters() + agent.critic.parameters()
    assert all(np.array_equal(b, a.data) for b, a in zip(before, after))


def test_update_reduces_critic_loss_on_fixed_batch():
    agent = MADDPG(TrainingConfig(critic_lr=1e-2, **TINY), np.random.default_rng(0))
    batch = sample_batch(filled_buffer(), 16, np.random.default_rng(0))
    with ad.no_grad():
        first = agent.critic_loss(batch).item()
    for _ in range(20):
        agent.update(batch, np.zeros(16, dtype=int))
    with ad.no_grad():
        assert agent.critic_loss(batch).item() < first


def test_actor_loss_only_moves_selected_agent():
    agent = MADDPG(TrainingConfig(**TINY), np.random.default_rng(0))
    batch = sample_batch(filled_buffer(), 4, np.random.default_rng(0))
    agent.actor.zero_grad()
    ad.backward(agent.actor_loss(batch, np.array([0, 1, 2, 0])))
    assert any(np.any(p.grad != 0) for p in agent.actor.parameters())


def test_divergence_detected():
    agent = MADDPG(TrainingConfig(**TINY), np.random.default_rng(0))
    batch = sample_batch(filled_buffer(), 16, np.random.default_rng(0))
    bad = type(batch)(batch.states, batch.actions, batch.rewards * np.inf, batch.next_states,
                      batch.dones)
    with pytest.raises(DivergenceError):
        agent.update(bad, np.zeros(16, dtype=int))


def test_training_writes_metrics_and_is_deterministic(tmp_path):
    cfg = TrainingConfig(episodes=8, eval_interval=4, **TINY)
    r1 = maddpg_train(cfg, tmp_path / "a")
    maddpg_train(cfg, tmp_path / "b")
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "invariancy.csv").read_bytes() == \
        (tmp_path / "b" / "invariancy.csv").read_bytes()
    lines = a.decode().strip().splitlines()
    assert lines[0] == "episode,return,critic_loss,actor_loss,rot_invariancy,transl_invariancy"
    assert len(lines) == 9 and len(r1.metrics) == 8
    assert len(r1.invariancy) == 2
    assert abs(r1.invariancy[0][1].actor_rotation - 1) < 1e-9


def test_checkpoint_roundtrip(tmp_path):
    cfg = TrainingConfig(**TINY)
    agent = MADDPG(cfg, np.random.default_rng(0))
    save_checkpoint(agent, tmp_path / "ck", {"note": 1})
    back = load_checkpoint(tmp_path / "ck")
    assert back.config == cfg
    for name in ("actor", "critic", "target_actor", "target_critic"):
        for a, b in zip(getattr(agent, name).parameters(), getattr(back, name).parameters()):
            assert a.data.tobytes() == b.data.tobytes()
    nav = nav_config_for(cfg)
    assert evaluate(agent.actor, nav, 3, 0).mean_return == evaluate(back.actor, nav, 3, 0).mean_return
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing")
    (tmp_path / "ck" / "critic.npz").unlink()
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "ck")


def test_transfer_continues_training(tmp_path):
    cfg = TrainingConfig(episodes=4, **TINY)
    res = maddpg_train(cfg)
    six = TrainingConfig(episodes=4, num_agents=6, **TINY)
    again = maddpg_train(six, agent=res.agent)
    assert again.agent is res.agent and again.agent.nav.num_agents == 6


def test_actor_policy_has_no_tape():
    agent = MADDPG(TrainingConfig(**TINY), np.random.default_rng(0))
    from e3marl.envs.navigation import observe_all
    a = actor_policy(agent.actor)(observe_all(initial_states(NavConfig(), 2, 0)))
    assert isinstance(a, np.ndarray) and a.shape == (6, 3)
