import numpy as np
import pytest

from miirl.maxent import (
    expected_svf,
    mstep_state_weights,
    realized_svf,
    trajectory_loglik,
    trajectory_svf,
)
from miirl.mdp import TabularMdp, soft_backward, soft_value_iteration
from oracles import chain_mdp, enumerate_paths, random_instances, random_mdp, traj


def test_trajectory_svf_counts():
    assert trajectory_svf(traj([3] * 8, [0] * 8), 5).tolist() == [0, 0, 0, 8, 0]
    svf = trajectory_svf(traj([0, 2, 1, 4], [0] * 4), 6)
    assert svf.tolist() == [1, 1, 1, 0, 1, 0]
    assert svf.sum() == 4
    with pytest.raises(ValueError):
        trajectory_svf(traj([7], [0]), 5)


def test_expected_svf_on_a_deterministic_path():
    mdp = chain_mdp(4, start=[1.0, 0.0, 0.0, 0.0])
    always_move = np.array([[1.0, 0.0]] * 4)
    np.testing.assert_allclose(expected_svf(mdp, always_move, 3), [1, 1, 1, 0], atol=1e-15)


def test_expected_svf_symmetric_two_states():
    P = np.full((2, 2, 2), 0.5)
    svf = expected_svf(TabularMdp(P), np.full((2, 2), 0.5), 6)
    np.testing.assert_allclose(svf, [3.0, 3.0], atol=1e-12)


def test_expected_svf_matches_enumeration():
    for mdp, r, H in random_instances(21, count=8):
        policy = soft_value_iteration(mdp, r)
        oracle = np.zeros(mdp.n_states)
        for states, _, p in enumerate_paths(mdp, policy, H):
            np.add.at(oracle, list(states), p)
        svf = expected_svf(mdp, policy, H)
        np.testing.assert_allclose(svf, oracle, atol=1e-10)
        assert svf.sum() == pytest.approx(H, abs=1e-6)


def test_time_indexed_expected_svf_matches_enumeration():
    for mdp, r, H in random_instances(22, count=8):
        sol = soft_backward(mdp, r, H)
        oracle = np.zeros(mdp.n_states)
        for states, _, p in enumerate_paths(mdp, sol.policy, H):
            np.add.at(oracle, list(states), p)
        np.testing.assert_allclose(expected_svf(mdp, sol.policy, H), oracle, atol=1e-10)


def test_time_indexed_policy_uses_its_last_slices(rng):
    mdp = random_mdp(rng, 4, 2)
    sol = soft_backward(mdp, rng.normal(size=4), 6)
    np.testing.assert_allclose(
        expected_svf(mdp, sol.policy, 3), expected_svf(mdp, sol.policy[3:], 3), atol=1e-15
    )
    with pytest.raises(ValueError):
        expected_svf(mdp, sol.policy, 7)


def test_expected_svf_from_a_given_state():
    mdp = chain_mdp(3)
    svf = expected_svf(mdp, np.array([[1.0, 0.0]] * 3), 4, start=1)
    np.testing.assert_allclose(svf, [0, 1, 3], atol=1e-15)


def test_loglik_examples():
    uniform = np.full((6, 5), 0.2)
    t = traj([0, 1, 2, 3, 4, 5, 0, 1], [0, 1, 2, 3, 4, 0, 1, 2])
    assert trajectory_loglik(uniform, t) == pytest.approx(8 * np.log(0.2), abs=1e-12)
    det = np.eye(5)[[0, 1, 2, 3, 4, 0]]
    assert trajectory_loglik(det, traj([0, 1, 2, 3, 4, 5, 0, 1], [0, 1, 2, 3, 4, 0, 0, 1])) == 0.0
    pi = np.array([[0.7, 0.3], [0.8, 0.2]])
    two = traj([0, 1], [0, 1])
    assert trajectory_loglik(pi, two) == pytest.approx(np.log(0.14), abs=1e-12)
    assert np.exp(trajectory_loglik(pi, two)) == pytest.approx(0.7 * 0.2, abs=1e-12)


def test_loglik_of_impossible_step_is_minus_infinity():
    pi = np.array([[1.0, 0.0]])
    assert trajectory_loglik(pi, traj([0], [1])) == -np.inf


def test_time_indexed_loglik_aligns_to_the_end(rng):
    mdp = random_mdp(rng, 3, 2)
    sol = soft_backward(mdp, rng.normal(size=3), 5)
    t = traj([0, 2, 1], [1, 0, 1])
    direct = sum(np.log(sol.policy[2 + i, s, a]) for i, (s, a) in enumerate(t.steps))
    assert trajectory_loglik(sol.policy, t) == pytest.approx(direct, abs=1e-12)
    assert trajectory_loglik(None, t, sol.log_policy) == pytest.approx(direct, abs=1e-12)


def test_realized_svf_is_expected_svf_from_start_on_deterministic_mdp():
    rng = np.random.default_rng(4)
    mdp = random_mdp(rng, 5, 3, deterministic=True)
    r = rng.normal(size=5)
    sol = soft_backward(mdp, r, 4, discount=1.0)
    actions = [1, 0, 2, 0]
    states = [2]
    for a in actions[:-1]:
        states.append(int(mdp.transitions[states[-1], a].argmax()))
    t = traj(states, actions)
    got = realized_svf(mdp, sol.log_policy, t, 1.0)
    np.testing.assert_allclose(got, expected_svf(mdp, sol.policy, 4, start=2), atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_likelihood_gradient_matches_finite_differences(seed):
    # d/dr log p(traj) = mu(traj) - realized_svf for the discounted soft recursion
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 6, 3)
    r = rng.normal(size=6)
    states = rng.integers(0, 6, 5)
    t = traj(states, rng.integers(0, 3, 5))
    H = 7  # longer than the trajectory: exercises the time alignment

    def loglik(reward):
        return trajectory_loglik(None, t, soft_backward(mdp, reward, H).log_policy)

    sol = soft_backward(mdp, r, H)
    analytic = trajectory_svf(t, 6) - realized_svf(mdp, sol.log_policy, t, mdp.discount)
    step = 1e-6
    numeric = np.array([
        (loglik(r + step * e) - loglik(r - step * e)) / (2 * step) for e in np.eye(6)
    ])
    np.testing.assert_allclose(analytic, numeric, atol=1e-7)


def test_mstep_one_hot_gamma():
    w = mstep_state_weights([0.0, 1.0, 0.0], np.array([2.0, 0.0]), np.ones((3, 2)))
    assert np.all(w[[0, 2]] == 0)
    np.testing.assert_array_equal(w[1], [1.0, -1.0])


def test_mstep_fixed_point():
    svf = np.array([1.0, 3.0, 0.0])
    w = mstep_state_weights([0.4, 0.6], svf, np.stack([svf, svf]))
    assert np.all(w == 0)


def test_mstep_hand_arithmetic():
    mu = np.array([2.0, 1.0, 1.0])
    e = np.array([[1.0, 1.5, 1.5], [2.5, 0.5, 1.0]])
    w = mstep_state_weights([0.25, 0.75], mu, e)
    assert w.tolist() == [[0.25, -0.125, -0.125], [-0.375, 0.375, 0.0]]


def test_mstep_is_linear_in_gamma(rng):
    mu = rng.random(4)
    e = rng.random((3, 4))
    g1, g2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    mix = mstep_state_weights(0.3 * g1 + 0.7 * g2, mu, e)
    np.testing.assert_allclose(
        mix, 0.3 * mstep_state_weights(g1, mu, e) + 0.7 * mstep_state_weights(g2, mu, e), atol=1e-14
    )


def test_mstep_rejects_bad_input():
    with pytest.raises(ValueError):
        mstep_state_weights([0.5, 0.4], np.ones(2), np.ones((2, 2)))
    with pytest.raises(ValueError):
        mstep_state_weights([0.5, 0.5], np.ones(3), np.ones((2, 2)))
