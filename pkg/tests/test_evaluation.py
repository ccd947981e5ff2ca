import numpy as np
import pytest

from miirl.crp import CrpState
from miirl.envs import BenchmarkEnv, EnvKind, sample_demonstrations
from miirl.evaluation import EvdCache, average_evd, evaluate_run, evd, make_evaluator, responsibilities
from oracles import chain_mdp, corridor_env, matched_net

TOL = 1e-9


def chain_env(start=(1.0, 0.0, 0.0)):
    mdp = chain_mdp(3, 0.9, start=list(start))
    return BenchmarkEnv(EnvKind.GRIDWORLD, mdp, np.eye(3), np.array([[0.0, 0.0, 1.0]]), 0, 3)


@pytest.fixture(scope="module")
def corridor():
    env = corridor_env()
    demos = sample_demonstrations(env, 0, 3, 6, seed=1) + sample_demonstrations(env, 1, 3, 6, seed=2)
    return env, demos


def test_true_reward_has_zero_evd(corridor):
    env, _ = corridor
    for k in range(2):
        assert evd(env, k, env.true_rewards[k]) == 0.0
        assert evd(env, k, 2.0 * env.true_rewards[k] + 1.0) == 0.0


def test_swapped_goal_loses_the_geometric_series():
    # reward at the far end is worth g^2/(1-g) from state 0; a reward on state 0 makes the agent stay
    g = 0.9
    env = chain_env()
    assert evd(env, 0, [1.0, 0.0, 0.0], TOL) == pytest.approx(g * g / (1 - g), abs=1e-7)
    # averaged over a uniform start, states 1 and 2 still move right under the tie break
    uniform = chain_env(start=(1 / 3, 1 / 3, 1 / 3))
    assert evd(uniform, 0, [1.0, 0.0, 0.0], TOL) == pytest.approx(g * g / (1 - g) / 3, abs=1e-7)


def test_evd_is_never_negative(corridor, rng):
    env, _ = corridor
    for _ in range(5):
        assert evd(env, 1, rng.normal(size=env.n_states)) >= 0.0


def test_perfect_recovery_scores_zero(corridor):
    env, demos = corridor
    truth = [d.true_intention for d in demos]
    crp = CrpState.from_assignments(truth, 0.0)
    avg, transfer, k = evaluate_run(env, env, matched_net(env), crp, demos)
    assert (avg, transfer, k) == (0.0, 0.0, 2)


def test_misassignment_averages_per_demo_scores(corridor):
    env, _ = corridor
    demos = sample_demonstrations(env, 0, 1, 6, seed=3) + sample_demonstrations(env, 1, 1, 6, seed=4)
    net = matched_net(env)
    crp = CrpState.from_assignments([0, 0], 0.0)
    avg, transfer, k = evaluate_run(env, None, net, crp, demos)
    learned = net.rewards(env.features)[0]
    expected = (evd(env, 0, learned) + evd(env, 1, learned)) / 2
    assert avg == pytest.approx(expected, abs=1e-12)
    assert avg > 0 and transfer is None and k == 1


def test_mixture_with_confident_heads_matches_map(corridor):
    env, demos = corridor
    truth = [d.true_intention for d in demos]
    crp = CrpState.from_assignments(truth, 0.0)
    net = matched_net(env, scale=20.0)
    gamma = responsibilities(env, net, crp, demos)
    np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(gamma.argmax(axis=1) == truth)
    avg, _, _ = evaluate_run(env, None, net, crp, demos, attribution="mixture")
    assert avg == pytest.approx(0.0, abs=1e-6)


def test_identical_heads_give_count_responsibilities(corridor):
    env, demos = corridor
    net = matched_net(env)
    net.heads[1].weight[...] = net.heads[0].weight
    crp = CrpState.from_assignments([0, 0, 0, 0, 1, 1], 0.0)
    gamma = responsibilities(env, net, crp, demos)
    np.testing.assert_allclose(gamma, np.tile([4 / 6, 2 / 6], (6, 1)), atol=1e-12)


def test_mixture_of_one_head_equals_map(corridor, rng):
    env, demos = corridor
    cache = EvdCache(env)
    net = matched_net(env)
    net.heads[0].weight[...] = rng.normal(size=env.n_states)
    labels = [0] * len(demos)
    one_hot = np.tile([1.0, 0.0], (len(demos), 1))
    assert average_evd(cache, net, labels, demos, one_hot) == pytest.approx(
        average_evd(cache, net, labels, demos), abs=1e-12
    )


def test_evaluator_rejects_unlabelled_demos_and_bad_mode(corridor):
    env, demos = corridor
    with pytest.raises(ValueError):
        make_evaluator(env, None, demos, attribution="soft")
    unlabelled = [type(demos[0])(demos[0].states, demos[0].actions)]
    with pytest.raises(ValueError):
        make_evaluator(env, None, unlabelled)
