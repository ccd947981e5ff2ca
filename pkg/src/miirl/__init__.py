"""Adaptive multi-intention inverse reinforcement learning on tabular MDPs."""

from miirl.envs import BenchmarkEnv, EnvKind, Trajectory, make_env, sample_demonstrations, transfer_env
from miirl.evaluation import evaluate_run, evd, make_evaluator
from miirl.experiments import ExperimentConfig, load_config, run_experiment, write_outputs
from miirl.mdp import (
    ConvergenceError,
    TabularMdp,
    optimal_policy,
    policy_evaluation,
    soft_backward,
    soft_backward_pass,
    soft_value_iteration,
)
from miirl.reward_net import RewardNet
from miirl.trainers import TrainConfig, TrainingError, train, train_mcem, train_sem

__version__ = "0.1.0"

__all__ = [
    "BenchmarkEnv",
    "ConvergenceError",
    "EnvKind",
    "ExperimentConfig",
    "RewardNet",
    "TabularMdp",
    "TrainConfig",
    "TrainingError",
    "Trajectory",
    "evaluate_run",
    "evd",
    "load_config",
    "make_env",
    "make_evaluator",
    "optimal_policy",
    "policy_evaluation",
    "run_experiment",
    "sample_demonstrations",
    "soft_backward",
    "soft_backward_pass",
    "soft_value_iteration",
    "train",
    "train_mcem",
    "train_sem",
    "transfer_env",
    "write_outputs",
]
