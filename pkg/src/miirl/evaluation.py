"""Expected value difference and per-run evaluation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from miirl.crp import CrpState, estep_responsibilities
from miirl.envs import BenchmarkEnv, Trajectory, intention_reward
from miirl.maxent import trajectory_loglik
from miirl.mdp import (
    DEFAULT_TOLERANCE,
    as_stochastic,
    optimal_policy,
    policy_evaluation,
    soft_backward,
)
from miirl.reward_net import RewardNet

ATTRIBUTIONS = ("map", "mixture")


def start_value(env: BenchmarkEnv, values: np.ndarray) -> float:
    return float(env.mdp.start_distribution @ values)


def evd(
    env: BenchmarkEnv,
    true_intention: int,
    learned_reward,
    vi_tolerance: float = DEFAULT_TOLERANCE,
) -> float:
    """``|V(expert policy) - V(policy optimal for learned_reward)|`` under the true reward.

    Values are averaged over the start distribution.
    """
    true_reward = intention_reward(env, true_intention)
    expert, _ = optimal_policy(env.mdp, true_reward, vi_tolerance)
    learned, _ = optimal_policy(env.mdp, learned_reward, vi_tolerance)
    v_expert = policy_evaluation(env.mdp, expert, true_reward, vi_tolerance)
    v_learned = policy_evaluation(env.mdp, learned, true_reward, vi_tolerance)
    return abs(start_value(env, v_expert) - start_value(env, v_learned))


class EvdCache:
    """Memoised EVD pieces for one environment.

    Expert values are computed once per true intention, greedy policies once
    per learned head.
    """

    def __init__(self, env: BenchmarkEnv, vi_tolerance: float = DEFAULT_TOLERANCE):
        self.env = env
        self.tol = vi_tolerance
        self._expert: dict[int, float] = {}

    def expert_value(self, intention: int) -> float:
        if intention not in self._expert:
            reward = intention_reward(self.env, intention)
            policy, _ = optimal_policy(self.env.mdp, reward, self.tol)
            values = policy_evaluation(self.env.mdp, policy, reward, self.tol)
            self._expert[intention] = start_value(self.env, values)
        return self._expert[intention]

    def greedy_policies(self, learned_rewards: np.ndarray) -> list[np.ndarray]:
        return [optimal_policy(self.env.mdp, r, self.tol)[0] for r in learned_rewards]

    def policy_evd(self, policy: np.ndarray, intention: int) -> float:
        values = policy_evaluation(self.env.mdp, policy, intention_reward(self.env, intention), self.tol)
        return abs(self.expert_value(intention) - start_value(self.env, values))


def responsibilities(
    env: BenchmarkEnv, net: RewardNet, crp: CrpState, demos: Sequence[Trajectory]
) -> np.ndarray:
    """``(M, K)`` posterior over existing intentions for each demonstration.

    Uses the count-weighted soft likelihoods of the final heads, without
    new-intention mass.
    """
    horizon = max(len(d) for d in demos)
    solutions = [soft_backward(env.mdp, r, horizon) for r in net.rewards(env.features)]
    counts = np.asarray(crp.counts, dtype=np.float64)
    gamma = np.empty((len(demos), net.K))
    for m, d in enumerate(demos):
        logliks = [trajectory_loglik(None, d, s.log_policy) for s in solutions] + [0.0]
        gamma[m] = estep_responsibilities(counts, 0.0, logliks)[:-1]
    return gamma


def average_evd(
    cache: EvdCache,
    net: RewardNet,
    assignments: Sequence[int],
    demos: Sequence[Trajectory],
    gamma: np.ndarray | None = None,
) -> float:
    """Mean EVD over demonstrations.

    Each demo is scored with its assigned head's greedy policy, or with the
    ``gamma``-weighted mixture of all heads' greedy policies when given.
    """
    policies = cache.greedy_policies(net.rewards(cache.env.features))
    if gamma is None:
        pairs = [(int(k), int(d.true_intention)) for k, d in zip(assignments, demos)]
        scores = {p: cache.policy_evd(policies[p[0]], p[1]) for p in set(pairs)}
        return float(np.mean([scores[p] for p in pairs]))
    n_actions = cache.env.mdp.n_actions
    stochastic = np.stack([as_stochastic(p, n_actions) for p in policies])
    scores = []
    for g, d in zip(gamma, demos):
        mixture = np.tensordot(g, stochastic, axes=1)
        scores.append(cache.policy_evd(mixture, int(d.true_intention)))
    return float(np.mean(scores))


def _check_demos(demos: Sequence[Trajectory], attribution: str) -> None:
    if attribution not in ATTRIBUTIONS:
        raise ValueError(f"attribution must be one of {ATTRIBUTIONS}, got {attribution!r}")
    if any(d.true_intention is None for d in demos):
        raise ValueError("evaluation needs demonstrations with known true intentions")


def evaluate_run(
    env: BenchmarkEnv,
    transferred_env: BenchmarkEnv | None,
    net: RewardNet,
    crp: CrpState,
    demos: Sequence[Trajectory],
    vi_tolerance: float = DEFAULT_TOLERANCE,
    attribution: str = "map",
) -> tuple[float, float | None, int]:
    """``(avg EVD, transferred avg EVD, predicted K)`` for a trained model."""
    return make_evaluator(env, transferred_env, demos, vi_tolerance, attribution)(net, crp) + (crp.K,)


def make_evaluator(
    env: BenchmarkEnv,
    transferred_env: BenchmarkEnv | None,
    demos: Sequence[Trajectory],
    vi_tolerance: float = DEFAULT_TOLERANCE,
    attribution: str = "map",
):
    """Callback ``(net, crp) -> (avg EVD, transferred avg EVD or None)``."""
    _check_demos(demos, attribution)
    cache = EvdCache(env, vi_tolerance)
    transfer_cache = EvdCache(transferred_env, vi_tolerance) if transferred_env is not None else None

    def evaluator(net: RewardNet, crp: CrpState):
        gamma = responsibilities(env, net, crp, demos) if attribution == "mixture" else None
        avg = average_evd(cache, net, crp.assignments, demos, gamma)
        transfer = None
        if transfer_cache is not None:
            transfer = average_evd(transfer_cache, net, crp.assignments, demos, gamma)
        return avg, transfer

    return evaluator
