import numpy as np
import pytest

from miirl.envs import EnvKind, make_env, sample_demonstrations
from miirl.io import (
    FormatError,
    check_demos,
    demos_from_text,
    demos_to_text,
    env_from_text,
    env_to_text,
    load_demos,
    load_env,
    save_demos,
    save_env,
)
from oracles import traj


def same_env(a, b):
    assert a.kind is b.kind and a.size == b.size and a.layout_seed == b.layout_seed
    assert a.features.tobytes() == b.features.tobytes()
    assert a.true_rewards.tobytes() == b.true_rewards.tobytes()
    assert a.mdp.transitions.tobytes() == b.mdp.transitions.tobytes()
    if a.rule_labels is None:
        assert b.rule_labels is None
    else:
        assert np.array_equal(a.rule_labels, b.rule_labels)


@pytest.mark.parametrize(
    "kind, size, params",
    [(EnvKind.GRIDWORLD, None, {}), (EnvKind.OBJECTWORLD, 8, {"n_objects": 7}),
     (EnvKind.BINARYWORLD, 6, {}), (EnvKind.BINARYWORLD, 6, {"count_center": False})],
)
def test_env_round_trip(kind, size, params, tmp_path):
    env = make_env(kind, 5, size, **params)
    path = tmp_path / "env.txt"
    save_env(env, path)
    back = load_env(path)
    same_env(env, back)
    assert env_to_text(back) == path.read_text()


def test_demo_round_trip(tmp_path):
    env = make_env(EnvKind.BINARYWORLD, 1, 5)
    demos = sample_demonstrations(env, 2, 3, 4, seed=0) + [traj([0, 1], [4, 3])]
    path = tmp_path / "demos.txt"
    save_demos(demos, path)
    back = load_demos(path)
    assert [d.true_intention for d in back] == [2, 2, 2, None]
    for a, b in zip(demos, back):
        assert a.steps == b.steps
    check_demos(env, back)


def test_demo_text_layout():
    text = demos_to_text([traj([3, 4], [1, 0], 1)])
    assert text == "miirl-demos 1 count=1\n1 3:1 4:0\n"


@pytest.mark.parametrize(
    "text, line",
    [
        ("", None),
        ("miirl-env 2 kind=GridWorld size=8 seed=0 features=16\n", 1),
        ("not-an-env 1\n", 1),
        ("miirl-env 1 kind=Nowhere size=2 seed=0 features=1\n", 1),
        ("miirl-env 1 kind=MBinaryWorld size=1 seed=0 features=9\nstate 0 1 10101\n", 2),
        ("miirl-env 1 kind=MBinaryWorld size=1 seed=0 features=9\nstate 0 1 1010101xx\n", 2),
        ("miirl-env 1 kind=MBinaryWorld size=1 seed=0 features=9\nblob\n", 2),
        ("miirl-env 1 kind=MBinaryWorld size=2 seed=0 features=9\nstate 0 1 000000000\n", None),
        ("miirl-env 1 kind=MBinaryWorld size=1 seed=0 features=9\nstate 0 4 000000000\n", None),
    ],
)
def test_bad_env_files(text, line):
    with pytest.raises(FormatError) as info:
        env_from_text(text, "env.txt")
    prefix = "env.txt" if line is None else f"env.txt:{line}"
    assert str(info.value).startswith(prefix)


@pytest.mark.parametrize(
    "text",
    ["", "miirl-demos 1 count=2\n0 1:2\n", "miirl-demos 1\n0 1-2\n", "miirl-demos 1\nx 1:2\n", "miirl-demos 1\n0\n"],
)
def test_bad_demo_files(text):
    with pytest.raises(FormatError):
        demos_from_text(text)


def test_demos_must_fit_the_env():
    env = make_env(EnvKind.BINARYWORLD, 1, 4)
    with pytest.raises(ValueError):
        check_demos(env, [traj([16], [0])])
    with pytest.raises(ValueError):
        check_demos(env, [traj([0], [5])])
    with pytest.raises(ValueError):
        check_demos(env, [traj([0], [0], 6)])
