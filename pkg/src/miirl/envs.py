"""Benchmark environments: GridWorld, M-ObjectWorld and M-BinaryWorld.

Every generator is a pure function of its seed and parameters. States are
indexed row-major, ``s = row * size + col``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from miirl.mdp import DEFAULT_DISCOUNT, DEFAULT_TOLERANCE, TabularMdp, optimal_policy


class EnvKind(str, enum.Enum):
    GRIDWORLD = "GridWorld"
    OBJECTWORLD = "MObjectWorld"
    BINARYWORLD = "MBinaryWorld"


# reward per rule (1, 2, 3) for intentions A..F
RULE_REWARDS = np.array(
    [
        [5.0, -10.0, 0.0],
        [-10.0, 0.0, 5.0],
        [0.0, 5.0, -10.0],
        [-10.0, 5.0, 0.0],
        [5.0, 0.0, -10.0],
        [0.0, -10.0, 5.0],
    ]
)
INTENTION_NAMES = "ABCDEF"

# (d_row, d_col) for N, S, E, W, stay
MOVES = [(-1, 0), (1, 0), (0, 1), (0, -1), (0, 0)]

GRID_SIZE = 8
GRID_REGION = 2
GRID_N_REWARDS = 3
GRID_WEIGHT_DENSITY = 0.2


@dataclass(frozen=True, eq=False)
class BenchmarkEnv:
    kind: EnvKind
    mdp: TabularMdp
    features: np.ndarray  # (S, d) of 0/1
    true_rewards: np.ndarray  # (n_intentions, S)
    layout_seed: int
    size: int
    rule_labels: np.ndarray | None = None  # values in {1, 2, 3}; M-worlds only
    params: dict = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_intentions(self) -> int:
        return self.true_rewards.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    true_intention: int | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        if states.ndim != 1 or states.shape != actions.shape or states.size == 0:
            raise ValueError("a trajectory needs equal, nonzero numbers of states and actions")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> list[tuple[int, int]]:
        return list(zip(self.states.tolist(), self.actions.tolist()))


def grid_transitions(size: int, n_actions: int, intended: float) -> np.ndarray:
    """Noisy grid moves; off-grid moves leave the agent in place.

    With ``n_actions == 4`` the noise is spread over all four moves (the
    intended one included); with 5 actions it is spread over the four
    non-intended actions.
    """
    n = size * size
    P = np.zeros((n, n_actions, n))
    if n_actions == 4:
        probs = np.full((4, 4), (1.0 - intended) / 4)
        probs[np.diag_indices(4)] += intended
    elif n_actions == 5:
        probs = np.full((5, 5), (1.0 - intended) / 4)
        probs[np.diag_indices(5)] = intended
    else:
        raise ValueError("grid worlds have 4 or 5 actions")
    for r in range(size):
        for c in range(size):
            s = r * size + c
            for move, (dr, dc) in enumerate(MOVES[:n_actions]):
                rr, cc = r + dr, c + dc
                dest = rr * size + cc if 0 <= rr < size and 0 <= cc < size else s
                P[s, :, dest] += probs[:, move]
    return P


def _grid_weights(rng: np.random.Generator, n_features: int) -> np.ndarray:
    weights = np.zeros((GRID_N_REWARDS, n_features))
    for i in range(GRID_N_REWARDS):
        while not weights[i].any():
            mask = rng.random(n_features) < GRID_WEIGHT_DENSITY
            weights[i] = np.where(mask, rng.uniform(-1.0, 1.0, n_features), 0.0)
    return weights


def make_gridworld(seed: int, weights: np.ndarray | None = None) -> BenchmarkEnv:
    """8x8 GridWorld with 2x2 region-indicator features and 3 linear rewards."""
    size = GRID_SIZE
    per_side = size // GRID_REGION
    n_features = per_side * per_side
    rows, cols = np.divmod(np.arange(size * size), size)
    region = (rows // GRID_REGION) * per_side + cols // GRID_REGION
    features = np.zeros((size * size, n_features))
    features[np.arange(size * size), region] = 1.0
    if weights is None:
        weights = _grid_weights(np.random.default_rng(seed), n_features)
    weights = np.array(weights, dtype=np.float64)
    if weights.shape != (GRID_N_REWARDS, n_features):
        raise ValueError(f"GridWorld weights must have shape ({GRID_N_REWARDS}, {n_features})")
    mdp = TabularMdp(grid_transitions(size, 4, 0.8), DEFAULT_DISCOUNT)
    return BenchmarkEnv(
        kind=EnvKind.GRIDWORLD,
        mdp=mdp,
        features=features,
        true_rewards=weights @ features.T,
        layout_seed=seed,
        size=size,
        params={"weights": weights},
    )


def objectworld_rule(dist_outer1: float, dist_outer2: float) -> int:
    """Rule label of a cell given its distances to the nearest outer-color-1/2 objects."""
    if dist_outer1 <= 3.0:
        return 1 if dist_outer2 <= 2.0 else 2
    return 3


def _m_world(kind, size, seed, features, rules, params) -> BenchmarkEnv:
    mdp = TabularMdp(grid_transitions(size, 5, 0.7), DEFAULT_DISCOUNT)
    return BenchmarkEnv(
        kind=kind,
        mdp=mdp,
        features=features,
        true_rewards=RULE_REWARDS[:, rules - 1],
        layout_seed=seed,
        size=size,
        rule_labels=rules,
        params=params,
    )


def make_objectworld(
    seed: int,
    n_objects: int = 50,
    n_outer_colors: int = 2,
    size: int = 32,
    n_inner_colors: int | None = None,
) -> BenchmarkEnv:
    """M-ObjectWorld: objects with inner/outer colors, distance-threshold features.

    Feature ``(kind, c, d)`` is 1 iff the nearest object whose inner
    (``kind=0``) or outer (``kind=1``) color is ``c`` lies within Euclidean
    distance ``d`` for ``d = 1..size``.
    """
    if n_objects < 2 or n_outer_colors < 2:
        raise ValueError("M-ObjectWorld needs at least 2 objects and 2 outer colors")
    if n_objects > size * size:
        raise ValueError(f"cannot place {n_objects} objects on a {size}x{size} grid")
    n_inner_colors = n_outer_colors if n_inner_colors is None else n_inner_colors
    n_colors = max(n_outer_colors, n_inner_colors)
    rng = np.random.default_rng(seed)
    cells = rng.choice(size * size, size=n_objects, replace=False)
    inner = rng.integers(0, n_inner_colors, n_objects)
    outer = rng.integers(0, n_outer_colors, n_objects)

    rows, cols = np.divmod(np.arange(size * size), size)
    orow, ocol = np.divmod(cells, size)
    dist = np.hypot(rows[:, None] - orow[None, :], cols[:, None] - ocol[None, :])

    def nearest(mask):
        return dist[:, mask].min(axis=1) if mask.any() else np.full(size * size, np.inf)

    thresholds = np.arange(1, size + 1, dtype=np.float64)
    blocks = []
    for colors in (inner, outer):
        for c in range(n_colors):
            d = nearest(colors == c)
            blocks.append(d[:, None] <= thresholds[None, :])
    features = np.concatenate(blocks, axis=1).astype(np.float64)

    d1, d2 = nearest(outer == 0), nearest(outer == 1)
    rules = np.array([objectworld_rule(a, b) for a, b in zip(d1, d2)], dtype=np.int64)
    params = {
        "n_objects": n_objects,
        "n_outer_colors": n_outer_colors,
        "n_inner_colors": n_inner_colors,
        "objects": np.stack([cells, inner, outer], axis=1),
    }
    return _m_world(EnvKind.OBJECTWORLD, size, seed, features, rules, params)


def binaryworld_rule(n_color_one: int) -> int:
    """Rule label from the number of color-1 cells in the 3x3 block."""
    return {4: 1, 5: 2}.get(int(n_color_one), 3)


def binaryworld_features(colors: np.ndarray) -> np.ndarray:
    """Row-major 3x3 neighbourhood indicators of color 1; off-grid reads as color 2."""
    size = colors.shape[0]
    padded = np.zeros((size + 2, size + 2))
    padded[1:-1, 1:-1] = colors == 1
    blocks = [padded[dr : dr + size, dc : dc + size] for dr in range(3) for dc in range(3)]
    return np.stack(blocks, axis=-1).reshape(size * size, 9)


def binaryworld_rules(features: np.ndarray, count_center: bool = True) -> np.ndarray:
    counts = features.sum(axis=1)
    if not count_center:
        counts = counts - features[:, 4]
    return np.array([binaryworld_rule(n) for n in counts], dtype=np.int64)


def make_binaryworld(seed: int, size: int = 32, count_center: bool = True) -> BenchmarkEnv:
    """M-BinaryWorld: random two-color cells, 3x3 color features.

    Rules count color-1 cells over the full 3x3 block, or over the 8
    surrounding cells when ``count_center`` is false.
    """
    rng = np.random.default_rng(seed)
    colors = np.where(rng.random((size, size)) < 0.5, 1, 2)
    features = binaryworld_features(colors)
    rules = binaryworld_rules(features, count_center)
    params = {"colors": colors, "count_center": bool(count_center)}
    return _m_world(EnvKind.BINARYWORLD, size, seed, features, rules, params)


def make_env(kind: EnvKind | str, seed: int, size: int | None = None, **params) -> BenchmarkEnv:
    kind = EnvKind(kind)
    if kind is EnvKind.GRIDWORLD:
        if size not in (None, GRID_SIZE):
            raise ValueError("GridWorld is always 8x8")
        return make_gridworld(seed, **params)
    if kind is EnvKind.OBJECTWORLD:
        return make_objectworld(seed, size=size or 32, **params)
    return make_binaryworld(seed, size=size or 32, **params)


def transfer_env(env: BenchmarkEnv, seed: int) -> BenchmarkEnv:
    """Fresh layout of the same kind, size and reward rules."""
    if env.kind is EnvKind.GRIDWORLD:
        # region layout is fixed; the reward rule is the weight matrix
        return make_gridworld(seed, weights=env.params["weights"])
    if env.kind is EnvKind.OBJECTWORLD:
        return make_objectworld(
            seed,
            n_objects=env.params["n_objects"],
            n_outer_colors=env.params["n_outer_colors"],
            size=env.size,
            n_inner_colors=env.params["n_inner_colors"],
        )
    return make_binaryworld(seed, size=env.size, count_center=env.params.get("count_center", True))


def intention_reward(env: BenchmarkEnv, intention: int) -> np.ndarray:
    if not 0 <= intention < env.n_intentions:
        raise IndexError(
            f"intention {intention} out of range for {env.kind.value} "
            f"(0..{env.n_intentions - 1})"
        )
    return env.true_rewards[intention]


def parse_intention(token: str | int) -> int:
    """Accept ``"A".."F"`` or an integer index."""
    if isinstance(token, (int, np.integer)):
        return int(token)
    token = token.strip()
    if token.upper() in INTENTION_NAMES and len(token) == 1 and not token.isdigit():
        return INTENTION_NAMES.index(token.upper())
    return int(token)


def sample_demonstrations(
    env: BenchmarkEnv,
    intention: int,
    count: int,
    length: int,
    seed: int,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[Trajectory]:
    """Roll out the expert's optimal policy for ``intention``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    policy, _ = optimal_policy(env.mdp, intention_reward(env, intention), tolerance)
    rng = np.random.default_rng(seed)
    P = env.mdp.transitions
    S = env.n_states
    cum_start = np.cumsum(env.mdp.start_distribution)
    demos = []
    for _ in range(count):
        states = np.empty(length, dtype=np.int64)
        s = min(int(np.searchsorted(cum_start, rng.random(), side="right")), S - 1)
        for t in range(length):
            states[t] = s
            row = np.cumsum(P[s, policy[s]])
            s = min(int(np.searchsorted(row, rng.random(), side="right")), S - 1)
        demos.append(Trajectory(states, policy[states], true_intention=intention))
    return demos
