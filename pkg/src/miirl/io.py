"""Plain-text archives for environments and demonstrations.

Environment file::

    miirl-env 1 kind=MBinaryWorld size=16 seed=3 features=9 count_center=1
    <parameter lines>
    state <s> <rule> <feature bits>
    ...

Parameter lines are ``weight <i> <w_0> ... <w_d>`` for GridWorld (floats
written with ``repr`` so they read back exactly) and ``object <cell>
<inner> <outer>`` for M-ObjectWorld. The rule column is ``-`` for
GridWorld. Features are 0/1 and written as one digit string.

Demonstration file::

    miirl-demos 1 count=<n>
    <true intention or -> <s_0>:<a_0> <s_1>:<a_1> ...
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from miirl.envs import (
    DEFAULT_DISCOUNT,
    RULE_REWARDS,
    BenchmarkEnv,
    EnvKind,
    Trajectory,
    grid_transitions,
)
from miirl.mdp import TabularMdp

ENV_MAGIC = "miirl-env"
DEMO_MAGIC = "miirl-demos"
FORMAT_VERSION = "1"


class FormatError(ValueError):
    """A file does not follow the expected layout."""

    def __init__(self, path, line_no: int | None, message: str):
        where = f"{path}:{line_no}" if line_no is not None else str(path)
        super().__init__(f"{where}: {message}")


def _header(fields: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in fields.items())


def _parse_header(path, line: str, magic: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != magic:
        raise FormatError(path, 1, f"expected a '{magic}' header")
    if parts[1] != FORMAT_VERSION:
        raise FormatError(path, 1, f"unsupported format version {parts[1]}")
    fields = {}
    for token in parts[2:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(path, 1, f"malformed header field '{token}'")
        fields[key] = value
    return fields


def env_to_text(env: BenchmarkEnv) -> str:
    header = {
        "kind": env.kind.value,
        "size": env.size,
        "seed": env.layout_seed,
        "features": env.feature_dim,
    }
    lines = []
    if env.kind is EnvKind.GRIDWORLD:
        for i, row in enumerate(env.params["weights"]):
            lines.append(f"weight {i} " + " ".join(repr(float(w)) for w in row))
    elif env.kind is EnvKind.OBJECTWORLD:
        for key in ("n_objects", "n_outer_colors", "n_inner_colors"):
            header[key] = env.params[key]
        for cell, inner, outer in env.params["objects"]:
            lines.append(f"object {cell} {inner} {outer}")
    else:
        header["count_center"] = int(env.params.get("count_center", True))
    for s in range(env.n_states):
        rule = "-" if env.rule_labels is None else str(int(env.rule_labels[s]))
        bits = "".join("1" if f else "0" for f in env.features[s])
        lines.append(f"state {s} {rule} {bits}")
    return f"{ENV_MAGIC} {FORMAT_VERSION} {_header(header)}\n" + "\n".join(lines) + "\n"


def env_from_text(text: str, path="<string>") -> BenchmarkEnv:
    lines = text.splitlines()
    if not lines:
        raise FormatError(path, None, "empty file")
    head = _parse_header(path, lines[0], ENV_MAGIC)
    try:
        kind = EnvKind(head["kind"])
        size, seed, n_features = int(head["size"]), int(head["seed"]), int(head["features"])
    except (KeyError, ValueError) as exc:
        raise FormatError(path, 1, f"bad header: {exc}") from None
    n_states = size * size
    features = np.zeros((n_states, n_features))
    rules = np.zeros(n_states, dtype=np.int64)
    seen = np.zeros(n_states, dtype=bool)
    weights, objects = {}, []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            if parts[0] == "state":
                s = int(parts[1])
                if parts[2] != "-":
                    rules[s] = int(parts[2])
                bits = parts[3]
                if len(bits) != n_features or set(bits) - {"0", "1"}:
                    raise ValueError("feature row has the wrong width or non-binary entries")
                features[s] = [c == "1" for c in bits]
                seen[s] = True
            elif parts[0] == "weight":
                weights[int(parts[1])] = [float(w) for w in parts[2:]]
            elif parts[0] == "object":
                objects.append([int(v) for v in parts[1:4]])
            else:
                raise ValueError(f"unknown record '{parts[0]}'")
        except (IndexError, ValueError) as exc:
            raise FormatError(path, line_no, str(exc)) from None
    if not seen.all():
        raise FormatError(path, None, f"missing rows for {int((~seen).sum())} states")

    if kind is EnvKind.GRIDWORLD:
        w = np.array([weights[i] for i in sorted(weights)])
        mdp = TabularMdp(grid_transitions(size, 4, 0.8), DEFAULT_DISCOUNT)
        return BenchmarkEnv(kind, mdp, features, w @ features.T, seed, size, None, {"weights": w})
    if rules.min() < 1 or rules.max() > 3:
        raise FormatError(path, None, "M-world rules must lie in 1..3")
    if kind is EnvKind.OBJECTWORLD:
        params = {
            "n_objects": int(head["n_objects"]),
            "n_outer_colors": int(head["n_outer_colors"]),
            "n_inner_colors": int(head["n_inner_colors"]),
            "objects": np.array(objects, dtype=np.int64).reshape(-1, 3),
        }
    else:
        # the center bit of the 3x3 block is the cell's own color
        colors = np.where(features[:, 4] == 1, 1, 2).reshape(size, size)
        params = {"colors": colors, "count_center": bool(int(head.get("count_center", "1")))}
    mdp = TabularMdp(grid_transitions(size, 5, 0.7), DEFAULT_DISCOUNT)
    return BenchmarkEnv(kind, mdp, features, RULE_REWARDS[:, rules - 1], seed, size, rules, params)


def save_env(env: BenchmarkEnv, path) -> None:
    Path(path).write_text(env_to_text(env), encoding="ascii", newline="\n")


def load_env(path) -> BenchmarkEnv:
    return env_from_text(Path(path).read_text(encoding="ascii"), path)


def demos_to_text(demos) -> str:
    lines = [f"{DEMO_MAGIC} {FORMAT_VERSION} count={len(demos)}"]
    for d in demos:
        label = "-" if d.true_intention is None else str(int(d.true_intention))
        lines.append(label + " " + " ".join(f"{s}:{a}" for s, a in d.steps))
    return "\n".join(lines) + "\n"


def demos_from_text(text: str, path="<string>") -> list[Trajectory]:
    lines = text.splitlines()
    if not lines:
        raise FormatError(path, None, "empty file")
    head = _parse_header(path, lines[0], DEMO_MAGIC)
    demos = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        try:
            label = None if parts[0] == "-" else int(parts[0])
            pairs = [tuple(int(v) for v in step.split(":")) for step in parts[1:]]
            states, actions = zip(*pairs)
            demos.append(Trajectory(np.array(states), np.array(actions), label))
        except ValueError as exc:
            raise FormatError(path, line_no, str(exc)) from None
    if "count" in head and int(head["count"]) != len(demos):
        raise FormatError(path, None, f"header says {head['count']} demonstrations, found {len(demos)}")
    return demos


def save_demos(demos, path) -> None:
    Path(path).write_text(demos_to_text(demos), encoding="ascii", newline="\n")


def load_demos(path) -> list[Trajectory]:
    return demos_from_text(Path(path).read_text(encoding="ascii"), path)


def check_demos(env: BenchmarkEnv, demos) -> None:
    """Raise if any demonstration refers to states or actions outside ``env``."""
    for i, d in enumerate(demos):
        if d.states.max() >= env.n_states or d.actions.max() >= env.mdp.n_actions:
            raise ValueError(f"demonstration {i} does not fit a {env.kind.value} of size {env.size}")
        if d.true_intention is not None and not 0 <= d.true_intention < env.n_intentions:
            raise ValueError(f"demonstration {i} has unknown intention {d.true_intention}")
