"""Multi-agent actor-critic training and evaluation."""
from .buffer import ReplayBuffer, Transition, TransitionBatch, sample_batch
from .config import TrainingConfig
from .evaluation import EvalResult, evaluate, evaluate_policy, evaluate_random, zero_shot_eval
from .maddpg import MADDPG, TrainResult, maddpg_train, td_target
from .policies import exploration_noise, heuristic_policy, random_policy

__all__ = [
    "ReplayBuffer", "Transition", "TransitionBatch", "sample_batch", "TrainingConfig",
    "EvalResult", "evaluate", "evaluate_policy", "evaluate_random", "zero_shot_eval",
    "MADDPG", "TrainResult", "maddpg_train", "td_target", "exploration_noise",
    "heuristic_policy", "random_policy",
]
