"""Brute-force oracles and small builders shared by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from miirl.envs import BenchmarkEnv, EnvKind, Trajectory
from miirl.mdp import TabularMdp
from miirl.reward_net import RewardNet


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, deterministic=False,
               discount=0.9) -> TabularMdp:
    """Dense random MDP; with ``deterministic`` every (s, a) has a single successor."""
    if deterministic:
        P = np.zeros((n_states, n_actions, n_states))
        nxt = rng.integers(0, n_states, (n_states, n_actions))
        P[np.arange(n_states)[:, None], np.arange(n_actions)[None, :], nxt] = 1.0
    else:
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    start = rng.dirichlet(np.ones(n_states))
    return TabularMdp(P, discount, start)


def random_instances(seed: int, count: int = 20, max_states=5, max_actions=3, max_horizon=4,
                     deterministic=False):
    """Seeded list of ``(mdp, reward, horizon)`` small enough to enumerate."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        S = int(rng.integers(2, max_states + 1))
        A = int(rng.integers(1, max_actions + 1))
        H = int(rng.integers(1, max_horizon + 1))
        out.append((random_mdp(rng, S, A, deterministic), rng.normal(size=S), H))
    return out


def enumerate_paths(mdp: TabularMdp, policy, horizon: int, start=None):
    """Yield ``(states, actions, probability)`` for every path of ``horizon`` steps.

    ``policy`` is ``(S, A)`` or time-indexed ``(horizon, S, A)``.
    """
    P = mdp.transitions
    start = mdp.start_distribution if start is None else start
    policy = np.asarray(policy)
    S, A = mdp.n_states, mdp.n_actions
    for states in itertools.product(range(S), repeat=horizon):
        if start[states[0]] == 0:
            continue
        for actions in itertools.product(range(A), repeat=horizon):
            p = start[states[0]]
            for t in range(horizon):
                pi = policy[t] if policy.ndim == 3 else policy
                p *= pi[states[t], actions[t]]
                if t + 1 < horizon:
                    p *= P[states[t], actions[t], states[t + 1]]
                if p == 0:
                    break
            if p > 0:
                yield states, actions, p


def rollouts(mdp: TabularMdp, policy, horizon: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, horizon)`` visited states of vectorised rollouts from the start distribution."""
    P = mdp.transitions
    states = np.empty((n, horizon), dtype=np.int64)
    s = rng.choice(mdp.n_states, size=n, p=mdp.start_distribution)
    policy = np.asarray(policy)
    for t in range(horizon):
        states[:, t] = s
        pi = policy[t] if policy.ndim == 3 else policy
        a = (rng.random(n)[:, None] > np.cumsum(pi[s], axis=1)).sum(axis=1)
        a = np.minimum(a, mdp.n_actions - 1)
        nxt = (rng.random(n)[:, None] > np.cumsum(P[s, a], axis=1)).sum(axis=1)
        s = np.minimum(nxt, mdp.n_states - 1)
    return states


def chain_mdp(n: int = 3, discount: float = 0.9, start=None) -> TabularMdp:
    """Deterministic chain: action 0 moves right (the last state absorbs), action 1 stays."""
    P = np.zeros((n, 2, n))
    for s in range(n):
        P[s, 0, min(s + 1, n - 1)] = 1.0
        P[s, 1, s] = 1.0
    return TabularMdp(P, discount, start)


def clustering_accuracy(true_labels, predicted) -> float:
    """Best-permutation agreement between two labellings (Hungarian matching)."""
    from scipy.optimize import linear_sum_assignment

    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    t_ids, t_idx = np.unique(true_labels, return_inverse=True)
    p_ids, p_idx = np.unique(predicted, return_inverse=True)
    table = np.zeros((len(t_ids), len(p_ids)))
    np.add.at(table, (t_idx, p_idx), 1)
    rows, cols = linear_sum_assignment(-table)
    return table[rows, cols].sum() / len(true_labels)


def traj(states, actions, label=None) -> Trajectory:
    return Trajectory(np.array(states), np.array(actions), label)


def corridor_env(n: int = 7) -> BenchmarkEnv:
    """Noisy 1-D corridor started in the middle; intention 0 wants the left end, 1 the right.

    Actions: 0 left, 1 right (each 0.9 success), 2 stay. One-hot features.
    """
    P = np.zeros((n, 3, n))
    for s in range(n):
        P[s, 0, max(s - 1, 0)] += 0.9
        P[s, 0, s] += 0.1
        P[s, 1, min(s + 1, n - 1)] += 0.9
        P[s, 1, s] += 0.1
        P[s, 2, s] = 1.0
    start = np.zeros(n)
    start[n // 2] = 1.0
    rewards = np.zeros((2, n))
    rewards[0, 0] = rewards[1, -1] = 1.0
    return BenchmarkEnv(EnvKind.GRIDWORLD, TabularMdp(P, 0.9, start), np.eye(n), rewards, 0, n)


def matched_net(env: BenchmarkEnv, scale: float = 10.0) -> RewardNet:
    """Linear net over one-hot features whose heads are ``scale`` times the true rewards."""
    net = RewardNet.init(env.feature_dim, env.n_states, k_init=env.n_intentions, hidden=())
    W, b = net.layers[0]
    W[...] = np.eye(env.n_states)
    b[...] = 0.0
    for head, reward in zip(net.heads, env.true_rewards):
        head.weight[...] = scale * reward
    return net
