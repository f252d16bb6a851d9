"""Training hyperparameters."""
from __future__ import annotations

from dataclasses import dataclass, fields

from ..errors import ConfigError

ACTOR_ARCHS = ("MLP", "SEGNN")
CRITIC_ARCHS = ("MLP", "SEGNN", "GCN")


@dataclass(frozen=True)
class TrainingConfig:
    gamma: float = 0.95
    batch_size: int = 64
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    tau: float = 0.05
    noise_start: float = 0.3
    noise_end: float = 0.05
    noise_decay_fraction: float = 0.5
    episode_length: int = 25
    episodes: int = 2000
    seed: int = 0
    critic_arch: str = "SEGNN"
    actor_arch: str = "SEGNN"
    num_agents: int = 3
    buffer_capacity: int = 100_000
    num_envs: int = 8               # environments stepped in lockstep
    update_every: int = 2           # lockstep steps between gradient updates
    warmup_transitions: int = 1000
    grad_clip: float = 1.0
    reward_scale: float = 1.0
    bootstrap_on_timeout: bool = True
    hidden_s: int = 32
    hidden_v: int = 8
    num_layers: int = 2
    mlp_hidden: int = 128
    eval_interval: int = 100        # episodes between invariancy measurements
    invariancy_states: int = 50

    def __post_init__(self):
        check = [
            ("gamma", 0 < self.gamma < 1, "must lie in (0, 1)"),
            ("tau", 0 < self.tau <= 1, "must lie in (0, 1]"),
            ("batch_size", self.batch_size >= 1, "must be positive"),
            ("actor_lr", self.actor_lr >= 0, "must be non-negative"),
            ("critic_lr", self.critic_lr >= 0, "must be non-negative"),
            ("noise_start", self.noise_start >= 0, "must be non-negative"),
            ("noise_end", self.noise_end >= 0, "must be non-negative"),
            ("noise_decay_fraction", 0 < self.noise_decay_fraction <= 1, "must lie in (0, 1]"),
            ("episode_length", self.episode_length >= 1, "must be positive"),
            ("episodes", self.episodes >= 1, "must be positive"),
            ("num_agents", self.num_agents >= 1, "must be positive"),
            ("num_envs", self.num_envs >= 1, "must be positive"),
            ("update_every", self.update_every >= 1, "must be positive"),
            ("buffer_capacity", self.buffer_capacity >= self.batch_size,
             "must hold at least one batch"),
            ("optimizer", self.optimizer in ("sgd", "adam"), "must be 'sgd' or 'adam'"),
            ("critic_arch", self.critic_arch in CRITIC_ARCHS, f"must be one of {CRITIC_ARCHS}"),
            ("actor_arch", self.actor_arch in ACTOR_ARCHS, f"must be one of {ACTOR_ARCHS}"),
            ("eval_interval", self.eval_interval >= 1, "must be positive"),
        ]
        for name, ok, why in check:
            if not ok:
                raise ConfigError(f"{name} {why}, got {getattr(self, name)!r}", name)

    @property
    def name(self) -> str:
        return f"[{self.critic_arch}, {self.actor_arch}]"

    def noise_at(self, episode: int) -> float:
        """Linear decay over the first ``noise_decay_fraction`` of training, then flat."""
        horizon = max(1.0, self.noise_decay_fraction * self.episodes)
        frac = min(1.0, episode / horizon)
        return self.noise_start + frac * (self.noise_end - self.noise_start)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))
