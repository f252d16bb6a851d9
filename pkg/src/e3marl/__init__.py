"""E(3)-equivariant actor-critic networks for multi-agent reinforcement learning."""

__version__ = "0.1.0"
