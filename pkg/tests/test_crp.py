import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from miirl.crp import (
    NEW,
    UNASSIGNED,
    CrpState,
    apply_assignment,
    crp_prior,
    estep_responsibilities,
    mh_accept,
    sstep_sample,
    unassign,
)


def state_of(assignments, alpha=1.0):
    return CrpState.from_assignments(assignments, alpha)


def test_round_robin():
    s = CrpState.round_robin(7, 3, 0.5)
    assert s.assignments == [0, 1, 2, 0, 1, 2, 0]
    assert s.counts == [3, 2, 2]
    assert CrpState.round_robin(2, 5, 1.0).K == 2


def test_from_assignments_validates():
    with pytest.raises(AssertionError):
        CrpState.from_assignments([0, 2], 1.0)  # intention 1 empty
    with pytest.raises(ValueError):
        CrpState.from_assignments([0], -1.0)


# prior


def test_prior_substitution_example():
    # counts (2, 1) after excluding trajectory 3, M = 4, alpha = 1
    s = state_of([0, 0, 1, 1])
    np.testing.assert_allclose(crp_prior(s, exclude=3), [2 / 4, 1 / 4, 1 / 4], atol=1e-15)


def test_prior_alpha_zero_has_no_new_mass():
    s = state_of([0, 0, 0, 0], alpha=0.0)
    np.testing.assert_allclose(crp_prior(s, exclude=0), [1.0, 0.0], atol=1e-15)


def test_prior_first_trajectory_opens_a_new_intention():
    s = CrpState([UNASSIGNED], [], 0.5)
    assert crp_prior(s, exclude=0).tolist() == [1.0]


def test_prior_degenerate_case_raises():
    s = state_of([0], alpha=0.0)
    with pytest.raises(ValueError):
        crp_prior(s, exclude=0)


def test_prior_drops_the_emptied_intention():
    s = state_of([0, 1, 1, 2])
    counts, kept = s.counts_excluding(0)
    assert kept == [1, 2]
    np.testing.assert_allclose(crp_prior(s, exclude=0), [2 / 4, 1 / 4, 1 / 4], atol=1e-15)


def test_prior_is_exchangeable_under_relabelling():
    a = crp_prior(state_of([0, 0, 0, 1, 2, 2]), exclude=5)
    b = crp_prior(state_of([2, 2, 2, 0, 1, 1]), exclude=5)
    assert sorted(a[:-1]) == sorted(b[:-1])
    assert a[-1] == b[-1]


# E-step


def test_equal_likelihoods_cancel():
    np.testing.assert_allclose(estep_responsibilities([3], 1.0, [-2.0, -2.0]), [0.75, 0.25], atol=1e-15)


def test_alpha_zero_kills_new_intention():
    gamma = estep_responsibilities([1, 2], 0.0, [-50.0, -60.0, 100.0])
    assert gamma[-1] == 0.0
    assert gamma.sum() == pytest.approx(1.0, abs=1e-12)


def test_direct_arithmetic_example():
    gamma = estep_responsibilities([1, 1], 1.0, np.log([0.4, 0.1, 0.1]))
    np.testing.assert_allclose(gamma, [2 / 3, 1 / 6, 1 / 6], atol=1e-12)


def test_estep_survives_huge_negative_logliks():
    gamma = estep_responsibilities([2, 1], 1.0, [-1e5, -1e5 - np.log(2), -1e5])
    # weights 2, 1/2, 1 after cancelling exp(-1e5)
    np.testing.assert_allclose(gamma, [4 / 7, 1 / 7, 2 / 7], atol=1e-12)


def test_estep_with_no_valid_intention_raises():
    with pytest.raises(ValueError):
        estep_responsibilities([1], 1.0, [-np.inf, -np.inf])
    with pytest.raises(ValueError):
        estep_responsibilities([1], 1.0, [0.0])


@given(
    counts=st.lists(st.integers(1, 20), min_size=1, max_size=6),
    alpha=st.floats(0.0, 10.0),
    shift=st.floats(-1e3, 1e3),
    data=st.data(),
)
@settings(max_examples=100, deadline=None)
def test_estep_shift_invariance(counts, alpha, shift, data):
    logliks = data.draw(st.lists(st.floats(-50, 50), min_size=len(counts) + 1, max_size=len(counts) + 1))
    a = estep_responsibilities(counts, alpha, logliks)
    b = estep_responsibilities(counts, alpha, np.array(logliks) + shift)
    np.testing.assert_allclose(a, b, atol=1e-9)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)


# S-step and MH


def test_sstep_one_hot_and_determinism():
    rng = np.random.default_rng(0)
    assert all(sstep_sample([0.0, 1.0, 0.0], rng) == 1 for _ in range(100))
    draws = [sstep_sample([0.2, 0.3, 0.5], np.random.default_rng(7)) for _ in range(3)]
    assert len(set(draws)) == 1


def test_sstep_never_picks_zero_mass():
    rng = np.random.default_rng(1)
    assert all(sstep_sample([0.5, 0.5, 0.0], rng) != 2 for _ in range(2000))


def test_sstep_frequency_within_three_sigma():
    rng = np.random.default_rng(2)
    n = 100_000
    hits = sum(sstep_sample([0.5, 0.5], rng) == 0 for _ in range(n))
    assert abs(hits / n - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_mh_accepts_uphill_and_identical():
    rng = np.random.default_rng(3)
    assert all(mh_accept(-5.0, -4.0, rng) for _ in range(100))
    assert all(mh_accept(-5.0, -5.0, rng) for _ in range(100))


def test_mh_acceptance_rate_within_three_sigma():
    rng = np.random.default_rng(4)
    n = 100_000
    rate = np.mean([mh_accept(0.0, np.log(0.3), rng) for _ in range(n)])
    assert abs(rate - 0.3) <= 3 * np.sqrt(0.3 * 0.7 / n)


# assignment bookkeeping


def test_reassign_to_own_intention_is_noop():
    s = state_of([0, 1, 1])
    event = apply_assignment(s, 1, 1)
    assert s.assignments == [0, 1, 1] and s.counts == [1, 2]
    assert not event.born and event.remap is None


def test_moving_the_last_member_prunes_and_remaps():
    s = state_of([0, 1, 2, 2])
    event = apply_assignment(s, 1, 0)
    assert s.K == 2 and s.counts == [2, 2]
    assert s.assignments == [0, 0, 1, 1]
    assert event.remap == {0: 0, 2: 1} and event.removed == 1


def test_birth_appends_an_intention():
    s = state_of([0, 0, 1])
    event = apply_assignment(s, 0, NEW)
    assert event.born and s.K == 3 and s.assignments == [2, 0, 1]


def test_singleton_moving_to_new_keeps_k():
    s = state_of([0, 1])
    event = apply_assignment(s, 0, NEW)
    assert event.born and event.removed == 0
    assert s.K == 2 and s.assignments == [1, 0]


def test_unassign_then_assign():
    s = state_of([0, 1, 1])
    event = unassign(s, 0)
    assert event.removed == 0 and s.assignments == [UNASSIGNED, 0, 0] and s.counts == [2]
    apply_assignment(s, 0, 0)
    assert s.counts == [3]


def test_bad_indices_raise():
    s = state_of([0, 0])
    with pytest.raises(IndexError):
        apply_assignment(s, 2, 0)
    with pytest.raises(IndexError):
        apply_assignment(s, 0, 1)


@given(
    n=st.integers(1, 12),
    k_init=st.integers(1, 4),
    ops=st.lists(st.tuples(st.integers(0, 11), st.integers(-2, 6)), max_size=60),
)
@settings(max_examples=200, deadline=None)
def test_random_operation_sequences_keep_invariants(n, k_init, ops):
    s = CrpState.round_robin(n, k_init, 1.0)
    for m, target in ops:
        m %= n
        if target == UNASSIGNED:
            unassign(s, m)
            apply_assignment(s, m, NEW if s.K == 0 else 0)
        elif target == NEW or target < s.K:
            apply_assignment(s, m, target)
        s.check()
        assert sum(s.counts) == n
        assert all(c >= 1 for c in s.counts)
        prior = crp_prior(s, exclude=m)
        assert prior.sum() == pytest.approx(1.0, abs=1e-12)
