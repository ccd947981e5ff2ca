"""Tabular MDPs and the dynamic-programming solvers used everywhere else.

Rewards are per-state vectors. Policies are plain arrays: a stochastic policy
is an ``(n_states, n_actions)`` array of probabilities, a deterministic policy
an ``(n_states,)`` integer array of action indices.

All iterative solvers share one stopping rule: iterate until
``residual * discount / (1 - discount) <= tolerance``, which bounds the
max-norm distance of the returned values from the true fixed point by
``tolerance``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import sparse

from miirl import _kernels

DEFAULT_DISCOUNT = 0.9
DEFAULT_TOLERANCE = 1e-4
MAX_ITERATIONS = 10_000


class ConvergenceError(RuntimeError):
    """A fixed-point iteration hit its iteration cap."""

    def __init__(self, solver: str, iterations: int, residual: float):
        super().__init__(
            f"{solver} did not converge after {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.solver = solver
        self.iterations = iterations
        self.residual = residual


class SoftSolution(NamedTuple):
    policy: np.ndarray
    values: np.ndarray
    log_policy: np.ndarray  # finite even where policy underflows to 0


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transitions: np.ndarray  # (S, A, S): P(s' | s, a)
    discount: float = DEFAULT_DISCOUNT
    start_distribution: np.ndarray | None = field(default=None)

    def __post_init__(self):
        P = np.array(self.transitions, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transitions must have shape (S, A, S), got {P.shape}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError("need at least one state and one action")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if not np.allclose(P.sum(axis=2), 1.0, rtol=0, atol=1e-9):
            raise ValueError("every transition row must sum to 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if self.start_distribution is None:
            start = np.full(P.shape[0], 1.0 / P.shape[0])
        else:
            start = np.array(self.start_distribution, dtype=np.float64)
            if start.shape != (P.shape[0],):
                raise ValueError("start_distribution must have one entry per state")
            if np.any(start < 0) or abs(start.sum() - 1.0) > 1e-9:
                raise ValueError("start_distribution must be a probability vector")
        P.flags.writeable = False
        start.flags.writeable = False
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "start_distribution", start)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @cached_property
    def flat_transitions(self) -> sparse.csr_array:
        """Sparse ``(S*A, S)`` view; row ``s*A + a`` is ``P(. | s, a)``."""
        return sparse.csr_array(self.transitions.reshape(-1, self.n_states))

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        P = self.flat_transitions
        return P.indptr, P.indices, P.data

    def expected_next(self, values: np.ndarray) -> np.ndarray:
        """``sum_s' P(s'|s,a) values[s']`` as an ``(S, A)`` array."""
        return (self.flat_transitions @ values).reshape(self.n_states, self.n_actions)


def as_stochastic(policy: np.ndarray, n_actions: int) -> np.ndarray:
    """Return a stochastic ``(S, A)`` view of a stochastic or deterministic policy."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        probs = np.zeros((policy.shape[0], n_actions))
        probs[np.arange(policy.shape[0]), policy.astype(np.int64)] = 1.0
        return probs
    return policy.astype(np.float64, copy=False)


def _check_reward(mdp: TabularMdp, reward) -> np.ndarray:
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (mdp.n_states,):
        raise ValueError(f"reward must have shape ({mdp.n_states},), got {reward.shape}")
    if not np.all(np.isfinite(reward)):
        raise ValueError("reward contains non-finite entries")
    return reward


def _stop_residual(discount: float, tolerance: float) -> float:
    """Largest residual whose fixed-point error bound is still within ``tolerance``."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if discount == 0.0:
        return np.inf
    return tolerance * (1.0 - discount) / discount


def _q_values(mdp: TabularMdp, reward: np.ndarray, values: np.ndarray) -> np.ndarray:
    return reward[:, None] + mdp.discount * mdp.expected_next(values)


def _logsumexp_rows(q: np.ndarray) -> np.ndarray:
    qmax = q.max(axis=1)
    return qmax + np.log(np.exp(q - qmax[:, None]).sum(axis=1))


def soft_values(
    mdp: TabularMdp,
    reward,
    tolerance: float = DEFAULT_TOLERANCE,
    init_values: np.ndarray | None = None,
    max_iter: int = MAX_ITERATIONS,
) -> SoftSolution:
    """Soft value iteration returning the policy, its log and the soft state values.

    ``init_values`` warm-starts the iteration; the fixed point does not
    depend on it.
    """
    stop = _stop_residual(mdp.discount, tolerance)
    reward = _check_reward(mdp, reward)
    if init_values is None:
        values = np.zeros(mdp.n_states)
    else:
        values = np.asarray(init_values, dtype=np.float64)
    q, values, iters, residual = _kernels.soft_value_iteration(
        *mdp.csr, mdp.n_actions, reward, mdp.discount, stop, values, max_iter
    )
    if iters > max_iter:
        raise ConvergenceError("soft value iteration", max_iter, residual)
    log_policy = q - values[:, None]
    # renormalise so rows sum to 1 to machine precision
    log_policy -= _logsumexp_rows(log_policy)[:, None]
    return SoftSolution(np.exp(log_policy), values, log_policy)


def soft_value_iteration(
    mdp: TabularMdp,
    reward,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> np.ndarray:
    """Stationary maximum-entropy policy for a per-state reward."""
    return soft_values(mdp, reward, tolerance, max_iter=max_iter).policy


def soft_backward(
    mdp: TabularMdp, reward, horizon: int, discount: float | None = None
) -> SoftSolution:
    """Finite-horizon soft backward recursion.

    Returns time-indexed policies of shape ``(horizon, S, A)``; slice ``t``
    acts with ``horizon - t`` steps to go. ``values`` are the soft values at
    ``t = 0``. With deterministic transitions the product of the factors
    along an action sequence equals ``exp(R(tau)) / Z(s_0)`` for the
    discounted state-reward sum ``R(tau) = sum_t discount**t * r(s_t)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    reward = _check_reward(mdp, reward)
    gamma = mdp.discount if discount is None else float(discount)
    log_policy, values = _kernels.soft_backward(
        *mdp.csr, mdp.n_actions, reward, int(horizon), gamma
    )
    return SoftSolution(np.exp(log_policy), values, log_policy)


def soft_backward_pass(
    mdp: TabularMdp, reward, horizon: int, discount: float | None = None
) -> np.ndarray:
    """Time-indexed policies of :func:`soft_backward`."""
    return soft_backward(mdp, reward, horizon, discount).policy


def optimal_values(
    mdp: TabularMdp,
    reward,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> tuple[np.ndarray, np.ndarray]:
    """Value iteration; returns ``(Q, V)`` at convergence."""
    stop = _stop_residual(mdp.discount, tolerance)
    reward = _check_reward(mdp, reward)
    values, iters, residual = _kernels.value_iteration(
        *mdp.csr, mdp.n_actions, reward, mdp.discount, stop, max_iter
    )
    if iters > max_iter:
        raise ConvergenceError("value iteration", max_iter, residual)
    return _q_values(mdp, reward, values), values


def optimal_policy(
    mdp: TabularMdp,
    reward,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy deterministic policy and ``V*``.

    Ties are broken towards the lowest action index.
    """
    q, values = optimal_values(mdp, reward, tolerance, max_iter)
    return np.argmax(q, axis=1), values


def policy_evaluation(
    mdp: TabularMdp,
    policy,
    reward,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> np.ndarray:
    """Value of ``policy`` (stochastic or deterministic) under ``reward``."""
    stop = _stop_residual(mdp.discount, tolerance)
    reward = _check_reward(mdp, reward)
    probs = as_stochastic(policy, mdp.n_actions)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy shape does not match the MDP")
    values, iters, residual = _kernels.policy_evaluation(
        *mdp.csr, mdp.n_actions, np.ascontiguousarray(probs), reward, mdp.discount, stop, max_iter
    )
    if iters > max_iter:
        raise ConvergenceError("policy evaluation", max_iter, residual)
    return values
