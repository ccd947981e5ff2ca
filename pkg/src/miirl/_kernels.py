"""Compiled inner loops for the tabular solvers.

Transitions arrive as CSR arrays of the ``(S*A, S)`` matrix whose row
``s*A + a`` holds ``P(. | s, a)``.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _expected_next(indptr, indices, data, values, out):
    for row in range(out.shape[0]):
        acc = 0.0
        for j in range(indptr[row], indptr[row + 1]):
            acc += data[j] * values[indices[j]]
        out[row] = acc


@numba.njit(cache=True)
def soft_value_iteration(indptr, indices, data, n_actions, reward, discount, stop_residual,
                         values, max_iter):
    """Returns ``(q, values, iterations, residual)``; ``iterations > max_iter`` means no convergence."""
    S = reward.shape[0]
    nxt = np.empty(S * n_actions)
    q = np.empty((S, n_actions))
    values = values.copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        _expected_next(indptr, indices, data, values, nxt)
        residual = 0.0
        for s in range(S):
            top = -np.inf
            for a in range(n_actions):
                v = reward[s] + discount * nxt[s * n_actions + a]
                q[s, a] = v
                if v > top:
                    top = v
            acc = 0.0
            for a in range(n_actions):
                acc += np.exp(q[s, a] - top)
            new = top + np.log(acc)
            diff = abs(new - values[s])
            if diff > residual:
                residual = diff
            values[s] = new
        if residual <= stop_residual:
            return q, values, it, residual
    return q, values, max_iter + 1, residual


@numba.njit(cache=True)
def value_iteration(indptr, indices, data, n_actions, reward, discount, stop_residual, max_iter):
    S = reward.shape[0]
    nxt = np.empty(S * n_actions)
    values = np.zeros(S)
    residual = np.inf
    for it in range(1, max_iter + 1):
        _expected_next(indptr, indices, data, values, nxt)
        residual = 0.0
        for s in range(S):
            top = -np.inf
            for a in range(n_actions):
                v = reward[s] + discount * nxt[s * n_actions + a]
                if v > top:
                    top = v
            diff = abs(top - values[s])
            if diff > residual:
                residual = diff
            values[s] = top
        if residual <= stop_residual:
            return values, it, residual
    return values, max_iter + 1, residual


@numba.njit(cache=True)
def policy_evaluation(indptr, indices, data, n_actions, policy, reward, discount,
                      stop_residual, max_iter):
    S = reward.shape[0]
    nxt = np.empty(S * n_actions)
    values = np.zeros(S)
    residual = np.inf
    for it in range(1, max_iter + 1):
        _expected_next(indptr, indices, data, values, nxt)
        residual = 0.0
        for s in range(S):
            acc = 0.0
            for a in range(n_actions):
                acc += policy[s, a] * nxt[s * n_actions + a]
            new = reward[s] + discount * acc
            diff = abs(new - values[s])
            if diff > residual:
                residual = diff
            values[s] = new
        if residual <= stop_residual:
            return values, it, residual
    return values, max_iter + 1, residual


@numba.njit(cache=True)
def expected_svf(indptr, indices, data, n_actions, policy, start, horizon):
    S = start.shape[0]
    d = start.copy()
    visits = start.copy()
    nxt = np.empty(S)
    for _ in range(horizon - 1):
        nxt[:] = 0.0
        for s in range(S):
            if d[s] == 0.0:
                continue
            for a in range(n_actions):
                mass = d[s] * policy[s, a]
                if mass == 0.0:
                    continue
                row = s * n_actions + a
                for j in range(indptr[row], indptr[row + 1]):
                    nxt[indices[j]] += mass * data[j]
        d[:] = nxt
        visits += d
    return visits


@numba.njit(cache=True)
def soft_backward(indptr, indices, data, n_actions, reward, horizon, discount):
    """Finite-horizon soft recursion; returns ``(log_policy[H, S, A], V_0)``."""
    S = reward.shape[0]
    nxt = np.empty(S * n_actions)
    values = np.zeros(S)
    log_policy = np.empty((horizon, S, n_actions))
    for t in range(horizon - 1, -1, -1):
        _expected_next(indptr, indices, data, values, nxt)
        for s in range(S):
            top = -np.inf
            for a in range(n_actions):
                v = reward[s] + discount * nxt[s * n_actions + a]
                log_policy[t, s, a] = v
                if v > top:
                    top = v
            acc = 0.0
            for a in range(n_actions):
                acc += np.exp(log_policy[t, s, a] - top)
            v_s = top + np.log(acc)
            for a in range(n_actions):
                log_policy[t, s, a] -= v_s
            values[s] = v_s
    return log_policy, values


@numba.njit(cache=True)
def realized_svf(indptr, indices, data, n_actions, log_policy, states, actions, discount):
    """Signed, discounted forward pass behind the exact likelihood gradient.

    ``log_policy`` is time-indexed with one slice per trajectory step.
    """
    S = log_policy.shape[1]
    T = states.shape[0]
    d = np.zeros(S)
    visits = np.zeros(S)
    nxt = np.zeros(S)
    for t in range(T):
        d[states[t]] += 1.0
        for s in range(S):
            visits[s] += d[s]
        if t + 1 == T:
            break
        # remove the mass the realised transition would have predicted
        row = states[t] * n_actions + actions[t]
        for j in range(indptr[row], indptr[row + 1]):
            nxt[indices[j]] -= data[j]
        for s in range(S):
            if d[s] == 0.0:
                continue
            for a in range(n_actions):
                mass = d[s] * np.exp(log_policy[t, s, a])
                if mass == 0.0:
                    continue
                row = s * n_actions + a
                for j in range(indptr[row], indptr[row + 1]):
                    nxt[indices[j]] += mass * data[j]
        for s in range(S):
            d[s] = discount * nxt[s]
            nxt[s] = 0.0
    return visits


@numba.njit(cache=True)
def expected_svf_timed(indptr, indices, data, n_actions, log_policy, start):
    S = start.shape[0]
    horizon = log_policy.shape[0]
    d = start.copy()
    visits = start.copy()
    nxt = np.empty(S)
    for t in range(horizon - 1):
        nxt[:] = 0.0
        for s in range(S):
            if d[s] == 0.0:
                continue
            for a in range(n_actions):
                mass = d[s] * np.exp(log_policy[t, s, a])
                if mass == 0.0:
                    continue
                row = s * n_actions + a
                for j in range(indptr[row], indptr[row + 1]):
                    nxt[indices[j]] += mass * data[j]
        d[:] = nxt
        visits += d
    return visits
