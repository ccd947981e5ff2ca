"""Shared fixtures."""

import numpy as np
import pytest

from miirl.envs import grid_transitions, make_binaryworld
from miirl.mdp import TabularMdp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_binaryworld():
    return make_binaryworld(3, size=6)


@pytest.fixture
def grid4():
    """4x4 noisy grid MDP with 5 actions (16 states)."""
    return TabularMdp(grid_transitions(4, 5, 0.7), 0.9)
