"""Invariancy measured along a training run."""
from __future__ import annotations

from dataclasses import replace

from ..marl.config import TrainingConfig
from ..marl.maddpg import maddpg_train
from .measures import InvariancyReport


def emergence_tracker(config: TrainingConfig, interval: int, out_dir=None, **train_kwargs
                      ) -> list[tuple[int, InvariancyReport]]:
    """Train with all four measures taken every ``interval`` episodes.

    Returns ``floor(episodes / interval)`` (episode, report) pairs; with
    ``out_dir`` the same rows land in ``invariancy.csv``.
    """
    result = maddpg_train(replace(config, eval_interval=interval), out_dir, **train_kwargs)
    return result.invariancy
