"""MADDPG with a shared decentralized actor and a centralized critic."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..envs.navigation import NavConfig, StateBatch, nav_reset, observe_all, observe_batch, step_batch
from ..errors import DivergenceError
from ..graph_builder import GraphConfig
from ..nn.policies import make_actor, make_critic
from ..optim import clip_grad_norm, make_optimizer
from ..symmetry_lab.measures import InvariancyReport, invariancy_report
from .buffer import ReplayBuffer, TransitionBatch, sample_batch
from .config import TrainingConfig
from .evaluation import sample_on_policy_states
from .policies import actor_policy, exploration_noise

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("episode", "return", "critic_loss", "actor_loss", "rot_invariancy",
                  "transl_invariancy")
INVARIANCY_COLUMNS = ("episode", "actor_rotation", "actor_translation", "critic_rotation",
                      "critic_translation", "num_states", "rotation_pairs", "rotation_skipped",
                      "translation_pairs", "translation_skipped")


def td_target(reward, done, q_next, gamma: float):
    """y = r + gamma * (1 - done) * Q'(s', a')."""
    return reward + gamma * (1.0 - done) * q_next


def nav_config_for(config: TrainingConfig, num_agents: int | None = None,
                   absolute_position: bool = False) -> NavConfig:
    return NavConfig(num_agents=num_agents or config.num_agents,
                     episode_length=config.episode_length,
                     absolute_self_position=absolute_position)


class MADDPG:
    """Networks, targets and optimizers for one training run."""

    def __init__(self, config: TrainingConfig, rng: np.random.Generator | None = None,
                 absolute_position: bool = False, graph: GraphConfig | None = None):
        self.config = config
        self.graph = graph or GraphConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.nav = nav_config_for(config, absolute_position=absolute_position)
        self.actor = make_actor(config.actor_arch, config.num_agents, rng, graph=self.graph,
                                hidden_s=config.hidden_s, hidden_v=config.hidden_v,
                                num_layers=config.num_layers, hidden=config.mlp_hidden,
                                max_norm=self.nav.max_action, absolute_position=absolute_position)
        self.critic = make_critic(config.critic_arch, config.num_agents, rng, graph=self.graph,
                                  hidden_s=config.hidden_s, hidden_v=config.hidden_v,
                                  num_layers=config.num_layers, hidden=config.mlp_hidden)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.reconfigure(config)

    def reconfigure(self, config: TrainingConfig) -> None:
        """Adopt new hyperparameters (fresh optimizer state), e.g. before transfer."""
        self.config = config
        self.nav = nav_config_for(config, absolute_position=self.nav.absolute_self_position)
        self.actor_opt = make_optimizer(config.optimizer, self.actor.parameters(),
                                        config.actor_lr, config.momentum)
        self.critic_opt = make_optimizer(config.optimizer, self.critic.parameters(),
                                         config.critic_lr, config.momentum)

    # -- losses -------------------------------------------------------------

    def critic_loss(self, batch: TransitionBatch) -> Tensor:
        cfg = self.config
        B, N = batch.size, batch.states.num_agents
        with ad.no_grad():
            a_next = self.target_actor.act(observe_all(batch.next_states, self.nav)).data
            q_next = self.target_critic.q(batch.next_states, a_next.reshape(B, N, 3)).data
        y = td_target(cfg.reward_scale * batch.rewards, batch.dones, q_next, cfg.gamma)
        err = self.critic.q(batch.states, batch.actions) - y
        return ad.mean(err * err)

    def actor_loss(self, batch: TransitionBatch, agents: np.ndarray) -> Tensor:
        """-mean Q(s, a with agent ``agents[b]``'s action replaced by the actor's)."""
        B, N = batch.size, batch.states.num_agents
        obs = observe_batch(batch.states, agents, self.nav)
        mu = ad.reshape(self.actor.act(obs), (B, 1, 3))
        mask = np.zeros((B, N, 1))
        mask[np.arange(B), agents, 0] = 1.0
        joint = mu * mask + batch.actions * (1.0 - mask)
        return -ad.mean(self.critic.q(batch.states, joint))

    # -- updates ------------------------------------------------------------

    def update(self, batch: TransitionBatch, agents: np.ndarray) -> tuple[float, float]:
        cfg = self.config
        self.critic.zero_grad()
        lc = self.critic_loss(batch)
        _check_finite(lc, "critic")
        ad.backward(lc)
        clip_grad_norm(self.critic.parameters(), cfg.grad_clip)
        self.critic_opt.step()

        self.actor.zero_grad()
        la = self.actor_loss(batch, agents)
        _check_finite(la, "actor")
        ad.backward(la)
        self.critic.zero_grad()
        clip_grad_norm(self.actor.parameters(), cfg.grad_clip)
        self.actor_opt.step()

        self.target_actor.soft_update_from(self.actor, cfg.tau)
        self.target_critic.soft_update_from(self.critic, cfg.tau)
        return lc.item(), la.item()


def _check_finite(loss: Tensor, name: str) -> None:
    if not np.all(np.isfinite(loss.data)):
        raise DivergenceError(f"{name} loss became non-finite ({loss.item()!r}); "
                              "lower the learning rate or the reward scale")


@dataclass
class TrainResult:
    agent: MADDPG
    metrics: list[dict] = field(default_factory=list)
    invariancy: list[tuple[int, InvariancyReport]] = field(default_factory=list)

    @property
    def actor(self):
        return self.agent.actor

    @property
    def critic(self):
        return self.agent.critic


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _CsvLog:
    def __init__(self, path: Path | None, columns):
        self.columns = columns
        self.fh = None
        if path is not None:
            self.fh = open(path, "w", newline="")
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(columns)

    def write(self, row: dict) -> None:
        if self.fh is not None:
            self.writer.writerow([_fmt(row.get(c)) for c in self.columns])
            self.fh.flush()

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


def maddpg_train(config: TrainingConfig, out_dir=None, agent: MADDPG | None = None,
                 absolute_position: bool = False, graph: GraphConfig | None = None,
                 progress=None) -> TrainResult:
    """Train for ``config.episodes`` episodes, stepping ``num_envs`` games in lockstep.

    If ``out_dir`` is given, ``metrics.csv`` and ``invariancy.csv`` are written
    there incrementally, so a diverged run keeps everything logged so far.
    Passing ``agent`` continues training existing networks (transfer).
    """
    cfg = config
    seeds = np.random.SeedSequence(cfg.seed).spawn(5)
    init_rng, env_rng, noise_rng, sample_rng, measure_rng = (np.random.default_rng(s)
                                                              for s in seeds)
    if agent is None:
        agent = MADDPG(cfg, init_rng, absolute_position, graph)
    elif agent.config != cfg:
        agent.reconfigure(cfg)
    nav = agent.nav
    N, V, L = cfg.num_agents, 2 * cfg.num_agents, cfg.episode_length
    buffer = ReplayBuffer(cfg.buffer_capacity, N, V)
    result = TrainResult(agent)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    metrics_log = _CsvLog(out / "metrics.csv" if out else None, METRIC_COLUMNS)
    inv_log = _CsvLog(out / "invariancy.csv" if out else None, INVARIANCY_COLUMNS)

    try:
        done_eps, lockstep = 0, 0
        while done_eps < cfg.episodes:
            k = min(cfg.num_envs, cfg.episodes - done_eps)
            noise = cfg.noise_at(done_eps)
            start = StateBatch.stack([nav_reset(N, env_rng, nav) for _ in range(k)])
            pos, vel = start.positions, start.velocities
            returns = np.zeros(k)
            closs, aloss = [], []
            for t in range(L):
                states = StateBatch(pos, vel, N)
                with ad.no_grad():
                    a = agent.actor.act(observe_all(states, nav)).data
                a = exploration_noise(a, noise, noise_rng, nav.max_action).reshape(k, N, 3)
                pos, vel, r = step_batch(pos, vel, a, nav)
                timeout = t + 1 >= L
                terminal = timeout and not cfg.bootstrap_on_timeout
                buffer.add_batch(states, a, r, StateBatch(pos, vel, N), np.full(k, terminal))
                returns += r
                lockstep += 1
                if lockstep % cfg.update_every == 0 and len(buffer) >= cfg.warmup_transitions:
                    batch = sample_batch(buffer, cfg.batch_size, sample_rng)
                    if batch is not None:
                        agents = sample_rng.integers(0, N, size=batch.size)
                        lc, la = agent.update(batch, agents)
                        closs.append(lc)
                        aloss.append(la)
            mc = float(np.mean(closs)) if closs else None
            ma = float(np.mean(aloss)) if aloss else None
            prev = done_eps
            done_eps += k
            rows = [{"episode": prev + j + 1, "return": returns[j], "critic_loss": mc,
                     "actor_loss": ma} for j in range(k)]
            for j, row in enumerate(rows):
                ep = row["episode"]
                if ep % cfg.eval_interval == 0:
                    rep = _measure(agent, nav, cfg, measure_rng)
                    result.invariancy.append((ep, rep))
                    row["rot_invariancy"] = rep.actor_rotation
                    row["transl_invariancy"] = rep.actor_translation
                    inv_log.write({"episode": ep, **rep.as_row()})
                result.metrics.append(row)
                metrics_log.write(row)
            if progress is not None:
                progress(done_eps, rows)
    finally:
        metrics_log.close()
        inv_log.close()
    return result


def _measure(agent: MADDPG, nav: NavConfig, cfg: TrainingConfig, rng) -> InvariancyReport:
    states = sample_on_policy_states(actor_policy(agent.actor), nav, cfg.invariancy_states, rng)
    return invariancy_report(agent.actor, agent.critic, states, nav)
