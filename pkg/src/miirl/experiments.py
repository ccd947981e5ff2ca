"""Multi-seed experiment runner and its file outputs.

A configuration is a flat set of ``key = value`` pairs (see
:class:`ExperimentConfig`); the same layout is used for config files, for
CLI overrides and for the manifest written next to the results, so a
manifest can be fed back in to repeat a run.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from miirl.envs import (
    INTENTION_NAMES,
    BenchmarkEnv,
    EnvKind,
    make_env,
    parse_intention,
    sample_demonstrations,
    transfer_env,
)
from miirl.evaluation import ATTRIBUTIONS, make_evaluator
from miirl.mdp import DEFAULT_TOLERANCE
from miirl.reward_net import RewardNet
from miirl.trainers import Algorithm, TrainConfig, TrainResult, train

log = logging.getLogger(__name__)

DESK_SIZE = 16
FULL_SIZE = 32
DEFAULT_LENGTH = {EnvKind.GRIDWORLD: 40, EnvKind.OBJECTWORLD: 8, EnvKind.BINARYWORLD: 8}

RUNS_HEADER = [
    "run_id", "seed", "algorithm", "env", "iteration",
    "avg_evd", "transfer_avg_evd", "k_predicted", "wall_ms",
]
SUMMARY_HEADER = [
    "point", "alpha", "demos_per_intention", "algorithm", "env", "repeats", "failed",
    "initial_avg_evd_mean", "avg_evd_mean", "avg_evd_stderr",
    "transfer_avg_evd_mean", "transfer_avg_evd_stderr",
    "k_predicted_mean", "k_predicted_stderr", "degenerate",
]


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvKind = EnvKind.BINARYWORLD
    size: int | None = None  # None: desk (or full) default for the kind
    full_scale: bool = False
    n_objects: int = 50
    n_outer_colors: int = 2
    count_center: bool = True
    intentions: tuple[int, ...] = (0, 1, 2)
    demos_per_intention: int = 16
    demo_length: int | None = None  # None: 40 for GridWorld, 8 for the M-worlds
    repeats: int = 6
    seed: int = 0
    seeds: tuple[int, ...] = ()  # explicit per-repeat seeds; default seed, seed + 1, ...
    alphas: tuple[float, ...] = ()  # sweep points; default the single alpha below
    demo_counts: tuple[int, ...] = ()  # sweep points over demos_per_intention
    attribution: str = "map"
    timing: bool = False
    workers: int = 1
    reward_maps: bool = False
    # training
    algorithm: Algorithm = Algorithm.SEM
    alpha: float = 1.0
    k_init: int = 1
    fixed_k: int | None = None
    max_iter: int = 200
    lr: float = 1e-3
    vi_tolerance: float = DEFAULT_TOLERANCE
    hidden: tuple[int, ...] = (32, 32)
    reward_feature_dim: int = 16
    head_bias: bool = True
    l2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "env", EnvKind(self.env))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        for name in ("intentions", "seeds", "alphas", "demo_counts", "hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.seeds and len(self.seeds) != self.repeats:
            raise ValueError(f"{len(self.seeds)} seeds given for {self.repeats} repeats")
        if not self.intentions:
            raise ValueError("need at least one intention")
        if self.demos_per_intention < 1 or any(c < 1 for c in self.demo_counts):
            raise ValueError("demos per intention must be >= 1")
        if self.demo_length is not None and self.demo_length < 1:
            raise ValueError("demo_length must be >= 1")
        if self.attribution not in ATTRIBUTIONS:
            raise ValueError(f"attribution must be one of {ATTRIBUTIONS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.base_train_config().resolved()

    # derived settings

    @property
    def env_size(self) -> int | None:
        if self.env is EnvKind.GRIDWORLD:
            return None
        if self.size is not None:
            return self.size
        return FULL_SIZE if self.full_scale else DESK_SIZE

    @property
    def length(self) -> int:
        return self.demo_length or DEFAULT_LENGTH[self.env]

    def repeat_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds else [self.seed + r for r in range(self.repeats)]

    def points(self) -> list[tuple[float, int]]:
        """Configuration points ``(alpha, demos per intention)``."""
        alphas = self.alphas or (self.alpha,)
        counts = self.demo_counts or (self.demos_per_intention,)
        return [(a, c) for a in alphas for c in counts]

    def env_params(self) -> dict:
        if self.env is EnvKind.OBJECTWORLD:
            return {"n_objects": self.n_objects, "n_outer_colors": self.n_outer_colors}
        if self.env is EnvKind.BINARYWORLD:
            return {"count_center": self.count_center}
        return {}

    def base_train_config(self, seed: int = 0, alpha: float | None = None) -> TrainConfig:
        return TrainConfig(
            algorithm=self.algorithm,
            alpha=self.alpha if alpha is None else alpha,
            k_init=self.k_init,
            fixed_k=self.fixed_k,
            max_iter=self.max_iter,
            lr=self.lr,
            vi_tolerance=self.vi_tolerance,
            seed=seed,
            hidden=self.hidden,
            reward_feature_dim=self.reward_feature_dim,
            head_bias=self.head_bias,
            l2=self.l2,
        )

    # key = value text

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in pairs.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ValueError(f"unknown config key '{key}'")
            try:
                values[name] = _parse_value(name, raw.strip())
            except ValueError as exc:
                raise ValueError(f"config key '{key}': {exc}") from None
        return dataclasses.replace(base or cls(), **values)

    @classmethod
    def from_text(cls, text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
        return cls.from_pairs({**parse_pairs(text), **(overrides or {})})


def parse_pairs(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    pairs = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {line_no}: expected 'key = value'")
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    return ExperimentConfig.from_text(Path(path).read_text(), overrides)


_INT_TUPLES = {"seeds", "demo_counts", "hidden"}
_BOOLS = {"full_scale", "count_center", "timing", "reward_maps", "head_bias"}
_OPTIONAL_INTS = {"size", "demo_length", "fixed_k"}
_INTS = {"n_objects", "n_outer_colors", "demos_per_intention", "repeats", "seed", "workers",
         "k_init", "max_iter", "reward_feature_dim"}
_FLOATS = {"alpha", "lr", "vi_tolerance", "l2"}


def _split(raw: str) -> list[str]:
    return [t for t in (p.strip() for p in raw.split(",")) if t]


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_value(name: str, raw: str):
    if name == "env":
        return EnvKind(raw)
    if name == "algorithm":
        return Algorithm(raw.upper())
    if name == "attribution":
        return raw.lower()
    if name == "intentions":
        return tuple(parse_intention(t) for t in _split(raw))
    if name == "alphas":
        return tuple(float(t) for t in _split(raw))
    if name in _INT_TUPLES:
        return tuple(int(t) for t in _split(raw))
    if name in _BOOLS:
        return _parse_bool(raw)
    if name in _OPTIONAL_INTS:
        return None if raw.lower() in ("", "none") else int(raw)
    if name in _INTS:
        return int(raw)
    if name in _FLOATS:
        return float(raw)
    raise ValueError(f"no parser for {name}")


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (EnvKind, Algorithm)):
        return value.value
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# running


@dataclass
class RunRecord:
    run_id: str
    seed: int
    algorithm: str
    env: str
    iteration: int
    avg_evd: float | None
    transfer_avg_evd: float | None
    k_predicted: int
    wall_ms: float | None = None


@dataclass
class RepeatOutcome:
    point: int
    repeat: int
    run_id: str
    seed: int
    records: list[RunRecord] = field(default_factory=list)
    initial_avg_evd: float | None = None
    error: str | None = None
    # final intention of every demonstration, next to its true intention
    assignments: list[int] = field(default_factory=list)
    true_intentions: list[int] = field(default_factory=list)
    # kept only when reward maps are requested
    env: BenchmarkEnv | None = None
    net: RewardNet | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outcomes: list[RepeatOutcome]

    @property
    def records(self) -> list[RunRecord]:
        return [r for o in self.outcomes for r in o.records]

    @property
    def failures(self) -> list[RepeatOutcome]:
        return [o for o in self.outcomes if not o.ok]


def derived_seeds(seed: int) -> dict[str, int]:
    """Independent seeds for the layout-free parts of one repeat."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("transfer", "demos", "train")
    return {n: int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for n, c in zip(names, children)}


def build_repeat(config: ExperimentConfig, seed: int, demos_per_intention: int):
    """Environment, transferred environment and demonstrations for one repeat."""
    seeds = derived_seeds(seed)
    env = make_env(config.env, seed, config.env_size, **config.env_params())
    transferred = transfer_env(env, seeds["transfer"])
    demos = []
    for i, intention in enumerate(config.intentions):
        demos += sample_demonstrations(
            env, intention, demos_per_intention, config.length, seeds["demos"] + i, config.vi_tolerance
        )
    return env, transferred, demos, seeds["train"]


def run_repeat(config: ExperimentConfig, point: int, repeat: int) -> RepeatOutcome:
    alpha, n_demos = config.points()[point]
    seed = config.repeat_seeds()[repeat]
    outcome = RepeatOutcome(point, repeat, f"p{point:02d}r{repeat:02d}", seed)
    try:
        env, transferred, demos, train_seed = build_repeat(config, seed, n_demos)
        evaluator = make_evaluator(env, transferred, demos, config.vi_tolerance, config.attribution)
        result = train(env.features, env.mdp, demos, config.base_train_config(train_seed, alpha), evaluator)
    except Exception as exc:  # a failed repeat is reported, the experiment continues
        outcome.error = f"{type(exc).__name__}: {exc}"
        log.error("run %s (seed %d) failed:\n%s", outcome.run_id, seed, traceback.format_exc())
        return outcome
    outcome.initial_avg_evd = result.initial_avg_evd
    outcome.assignments = list(result.crp.assignments)
    outcome.true_intentions = [int(d.true_intention) for d in demos]
    outcome.records = _records(config, outcome, result)
    if config.reward_maps:
        outcome.env, outcome.net = env, result.net
    return outcome


def _records(config: ExperimentConfig, outcome: RepeatOutcome, result: TrainResult) -> list[RunRecord]:
    return [
        RunRecord(
            run_id=outcome.run_id,
            seed=outcome.seed,
            algorithm=config.algorithm.value,
            env=config.env.value,
            iteration=h.iteration,
            avg_evd=h.avg_evd,
            transfer_avg_evd=h.transfer_avg_evd,
            k_predicted=h.k,
            wall_ms=h.wall_ms if config.timing else None,
        )
        for h in result.history
    ]


def _run_task(args):
    return run_repeat(*args)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Train and evaluate every repeat of every configuration point."""
    tasks = [(config, p, r) for p in range(len(config.points())) for r in range(config.repeats)]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(t) for t in tasks]
    outcomes.sort(key=lambda o: (o.point, o.repeat))
    return ExperimentResult(config, outcomes)


# summaries


def mean_stderr(values: Sequence[float]) -> tuple[float, float, bool]:
    """Mean, standard error ``s / sqrt(n)`` with the sample deviation, and a degenerate flag.

    A single value has standard error 0 and is flagged degenerate.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return math.nan, math.nan, True
    if values.size == 1:
        return float(values[0]), 0.0, True
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)), False


def summarize(result: ExperimentResult) -> list[dict]:
    config = result.config
    rows = []
    for point, (alpha, n_demos) in enumerate(config.points()):
        group = [o for o in result.outcomes if o.point == point]
        done = [o for o in group if o.ok and o.records]
        finals = [o.records[-1] for o in done]
        avg = mean_stderr([r.avg_evd for r in finals if r.avg_evd is not None])
        transfer = mean_stderr([r.transfer_avg_evd for r in finals if r.transfer_avg_evd is not None])
        k = mean_stderr([r.k_predicted for r in finals])
        initial = mean_stderr([o.initial_avg_evd for o in done if o.initial_avg_evd is not None])
        rows.append({
            "point": point,
            "alpha": alpha,
            "demos_per_intention": n_demos,
            "algorithm": config.algorithm.value,
            "env": config.env.value,
            "repeats": len(done),
            "failed": len(group) - len(done),
            "initial_avg_evd_mean": initial[0],
            "avg_evd_mean": avg[0],
            "avg_evd_stderr": avg[1],
            "transfer_avg_evd_mean": transfer[0],
            "transfer_avg_evd_stderr": transfer[1],
            "k_predicted_mean": k[0],
            "k_predicted_stderr": k[1],
            "degenerate": int(avg[2] or k[2]),
        })
    return rows


# files


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # shortest text that reads back to the same double
    return str(value)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def runs_csv(records: Sequence[RunRecord]) -> str:
    return _csv_text(RUNS_HEADER, [[getattr(r, k) for k in RUNS_HEADER] for r in records])


def summary_csv(rows: Sequence[dict]) -> str:
    return _csv_text(SUMMARY_HEADER, [[row[k] for k in SUMMARY_HEADER] for row in rows])


def read_runs_csv(path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            opt = lambda v: float(v) if v != "" else None  # noqa: E731
            out.append(RunRecord(
                run_id=row["run_id"],
                seed=int(row["seed"]),
                algorithm=row["algorithm"],
                env=row["env"],
                iteration=int(row["iteration"]),
                avg_evd=opt(row["avg_evd"]),
                transfer_avg_evd=opt(row["transfer_avg_evd"]),
                k_predicted=int(row["k_predicted"]),
                wall_ms=opt(row["wall_ms"]),
            ))
        return out


def reward_ppm(values: np.ndarray, size: int) -> str:
    """Plain PGM (P2) of a per-state map, min-max normalised; a constant map is mid-gray."""
    values = np.asarray(values, dtype=np.float64).reshape(size, size)
    lo, hi = values.min(), values.max()
    if hi > lo:
        pixels = np.rint(255.0 * (values - lo) / (hi - lo)).astype(int)
    else:
        pixels = np.full(values.shape, 128)
    rows = "\n".join(" ".join(str(p) for p in row) for row in pixels)
    return f"P2\n{size} {size}\n255\n{rows}\n"


def _intention_label(env: BenchmarkEnv, i: int) -> str:
    return str(i) if env.kind is EnvKind.GRIDWORLD else INTENTION_NAMES[i]


def write_outputs(result: ExperimentResult, out_dir) -> list[Path]:
    """Write runs.csv, summary.csv, manifest.txt and (optionally) reward maps."""
    out = Path(out_dir)
    written = []

    def put(path: Path, text: str):
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
        written.append(path)

    put(out / "runs.csv", runs_csv(result.records))
    put(out / "summary.csv", summary_csv(summarize(result)))
    manifest = result.config.to_text()
    for o in result.failures:
        manifest += f"# failed {o.run_id} seed={o.seed}: {o.error}\n"
    put(out / "manifest.txt", manifest)
    if result.config.reward_maps:
        for o in result.outcomes:
            if o.net is None or o.env is None:
                continue
            env = o.env
            for k, reward in enumerate(o.net.rewards(env.features)):
                put(out / "maps" / f"{o.run_id}_learned_{k}.ppm", reward_ppm(reward, env.size))
            for i in result.config.intentions:
                label = _intention_label(env, i)
                put(out / "maps" / f"{o.run_id}_true_{label}.ppm", reward_ppm(env.true_rewards[i], env.size))
    return written
