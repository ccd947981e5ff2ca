"""Maximum-entropy IRL quantities: visitation frequencies, likelihoods, M-step weights."""

from __future__ import annotations

import numpy as np

from miirl import _kernels
from miirl.envs import Trajectory
from miirl.mdp import TabularMdp


def trajectory_svf(traj: Trajectory, n_states: int) -> np.ndarray:
    """Visit counts of each state along the trajectory."""
    if traj.states.max() >= n_states or traj.states.min() < 0:
        raise ValueError("trajectory visits a state outside the MDP")
    return np.bincount(traj.states, minlength=n_states).astype(np.float64)


def _start_vector(mdp: TabularMdp, start) -> np.ndarray:
    if start is None:
        return np.asarray(mdp.start_distribution, dtype=np.float64)
    if np.ndim(start) == 0:
        vec = np.zeros(mdp.n_states)
        vec[int(start)] = 1.0
        return vec
    return np.asarray(start, dtype=np.float64)


def expected_svf(
    mdp: TabularMdp, policy: np.ndarray, horizon: int, start: int | np.ndarray | None = None
) -> np.ndarray:
    """Expected visit counts over ``horizon`` steps.

    ``policy`` is stationary ``(S, A)`` or time-indexed ``(T, S, A)`` with
    ``T >= horizon`` (the last ``horizon`` slices are used). ``start`` is a
    state index, a distribution over states, or ``None`` for the MDP's start
    distribution.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    start = _start_vector(mdp, start)
    policy = np.asarray(policy, dtype=np.float64)
    if policy.ndim == 3:
        if policy.shape[0] < horizon:
            raise ValueError("time-indexed policy is shorter than the horizon")
        with np.errstate(divide="ignore"):
            log_policy = np.log(policy[policy.shape[0] - horizon:])
        return _kernels.expected_svf_timed(*mdp.csr, mdp.n_actions, log_policy, start)
    return _kernels.expected_svf(
        *mdp.csr, mdp.n_actions, np.ascontiguousarray(policy), start, horizon
    )


def _align(log_policy: np.ndarray, traj: Trajectory) -> np.ndarray:
    """Slices of a time-indexed policy that act at the trajectory's steps."""
    T = len(traj)
    if log_policy.shape[0] < T:
        raise ValueError(f"time-indexed policy covers {log_policy.shape[0]} steps, trajectory has {T}")
    return log_policy[log_policy.shape[0] - T:]


def trajectory_loglik(policy: np.ndarray, traj: Trajectory, log_policy: np.ndarray | None = None) -> float:
    """``sum_t log pi_t(a_t | s_t)``; ``-inf`` when any step has probability zero.

    Policies may be stationary ``(S, A)`` or time-indexed ``(T, S, A)``.
    Pass ``log_policy`` to avoid underflow for near-deterministic policies.
    """
    if log_policy is None:
        with np.errstate(divide="ignore"):
            log_policy = np.log(policy)
    if log_policy.ndim == 3:
        steps = np.arange(len(traj))
        return float(np.sum(_align(log_policy, traj)[steps, traj.states, traj.actions]))
    return float(np.sum(log_policy[traj.states, traj.actions]))


def realized_svf(
    mdp: TabularMdp, log_policy: np.ndarray, traj: Trajectory, discount: float = 1.0
) -> np.ndarray:
    """Expected visits under a time-indexed policy, corrected by the trajectory's realised transitions.

    For a policy from ``soft_backward`` with the same ``discount``,
    ``trajectory_svf - realized_svf`` is the exact gradient of the
    trajectory log-likelihood with respect to the per-state reward. With
    deterministic transitions and ``discount = 1`` it equals the expected
    SVF from the trajectory's first state.
    """
    log_policy = np.ascontiguousarray(_align(np.asarray(log_policy, dtype=np.float64), traj))
    return _kernels.realized_svf(
        *mdp.csr, mdp.n_actions, log_policy, traj.states, traj.actions, float(discount)
    )


def mstep_state_weights(gamma, traj_svf: np.ndarray, expected_svfs: np.ndarray) -> np.ndarray:
    """Per-intention state weights ``gamma_k * (mu(tau) - E_k[mu])``, shape ``(K, S)``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    expected_svfs = np.atleast_2d(np.asarray(expected_svfs, dtype=np.float64))
    traj_svf = np.asarray(traj_svf, dtype=np.float64)
    if abs(gamma.sum() - 1.0) > 1e-9:
        raise ValueError("responsibilities must sum to 1")
    if expected_svfs.shape != (gamma.shape[0], traj_svf.shape[0]):
        raise ValueError(
            f"expected SVFs must have shape ({gamma.shape[0]}, {traj_svf.shape[0]}), "
            f"got {expected_svfs.shape}"
        )
    return gamma[:, None] * (traj_svf[None, :] - expected_svfs)
