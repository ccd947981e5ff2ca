"""Command-line entry point: ``miirl <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from miirl.crp import CrpState
from miirl.envs import EnvKind, make_env, parse_intention, sample_demonstrations
from miirl.evaluation import ATTRIBUTIONS, evaluate_run
from miirl.experiments import (
    DEFAULT_LENGTH,
    ExperimentConfig,
    load_config,
    run_experiment,
    summarize,
    write_outputs,
)
from miirl.io import check_demos, load_demos, load_env, save_demos, save_env
from miirl.reward_net import RewardNet
from miirl.trainers import train

log = logging.getLogger("miirl")

DEFAULT_SWEEP = (0.1, 0.5, 1.0, 2.0, 10.0)
# experiment keys that only make sense in the runner, not as flags of train
_EXPERIMENT_ONLY = {"seed"}


def _add_config_flags(parser: argparse.ArgumentParser, skip=()) -> None:
    group = parser.add_argument_group("experiment settings (override --config)")
    for f in dataclasses.fields(ExperimentConfig):
        if f.name in skip or f.name in _EXPERIMENT_ONLY:
            continue
        group.add_argument(
            "--" + f.name.replace("_", "-"), dest="cfg_" + f.name, metavar="VALUE", default=None
        )


def _overrides(args) -> dict[str, str]:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def _experiment_config(args, **extra) -> ExperimentConfig:
    overrides = _overrides(args)
    overrides["seed"] = str(args.seed)
    if args.full_scale:
        overrides["full_scale"] = "true"
    overrides.update({k: str(v) for k, v in extra.items()})
    if args.config:
        return load_config(args.config, overrides)
    return ExperimentConfig.from_pairs(overrides)


def cmd_gen_env(args) -> int:
    kind = EnvKind(args.env)
    size, params = None, {}
    if kind is not EnvKind.GRIDWORLD:
        size = args.size or (32 if args.full_scale else 16)
    if kind is EnvKind.OBJECTWORLD:
        params = {"n_objects": args.n_objects, "n_outer_colors": args.n_outer_colors}
    elif kind is EnvKind.BINARYWORLD:
        params = {"count_center": not args.exclude_center}
    env = make_env(kind, args.seed, size, **params)
    save_env(env, args.out)
    print(f"wrote {env.kind.value} ({env.n_states} states, {env.feature_dim} features) to {args.out}")
    return 0


def cmd_demo(args) -> int:
    env = load_env(args.env_file)
    length = args.length or DEFAULT_LENGTH[env.kind]
    intentions = [parse_intention(t) for t in args.intentions.split(",") if t.strip()]
    demos = []
    for i, intention in enumerate(intentions):
        demos += sample_demonstrations(env, intention, args.count, length, args.seed + i)
    save_demos(demos, args.out)
    print(f"wrote {len(demos)} demonstrations of length {length} to {args.out}")
    return 0


def cmd_train(args) -> int:
    env = load_env(args.env_file)
    demos = load_demos(args.demos)
    check_demos(env, demos)
    config = _experiment_config(args)
    result = train(env.features, env.mdp, demos, config.base_train_config(args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.net.save(out / "net.bin")
    (out / "assignments.txt").write_text("".join(f"{a}\n" for a in result.crp.assignments))
    (out / "train.txt").write_text(config.to_text())
    lines = ["iteration,k_predicted,births,deaths,accepted" + (",wall_ms" if config.timing else "")]
    for h in result.history:
        row = f"{h.iteration},{h.k},{h.births},{h.deaths},{h.accepted}"
        lines.append(row + (f",{h.wall_ms!r}" if config.timing else ""))
    (out / "history.csv").write_text("\n".join(lines) + "\n")
    print(f"trained {len(result.history)} iterations, K = {result.crp.K}, counts = {result.crp.counts}")
    return 0


def cmd_evaluate(args) -> int:
    env = load_env(args.env_file)
    demos = load_demos(args.demos)
    check_demos(env, demos)
    model = Path(args.model_dir)
    net = RewardNet.load(model / "net.bin")
    assignments = [int(x) for x in (model / "assignments.txt").read_text().split()]
    if len(assignments) != len(demos):
        raise ValueError(f"{len(assignments)} assignments for {len(demos)} demonstrations")
    crp = CrpState.from_assignments(assignments, 0.0)
    transferred = load_env(args.transfer_env) if args.transfer_env else None
    avg, transfer, k = evaluate_run(env, transferred, net, crp, demos, attribution=args.attribution)
    print(f"avg_evd={avg:.9g}")
    if transfer is not None:
        print(f"transfer_avg_evd={transfer:.9g}")
    print(f"k_predicted={k}")
    return 0


def _report(result, out_dir) -> int:
    write_outputs(result, out_dir)
    for row in summarize(result):
        print(
            f"alpha={row['alpha']:g} demos={row['demos_per_intention']} {row['algorithm']}: "
            f"avg_evd={row['avg_evd_mean']:.4g}±{row['avg_evd_stderr']:.2g} "
            f"K={row['k_predicted_mean']:.3g}±{row['k_predicted_stderr']:.2g} "
            f"({row['repeats']} ok, {row['failed']} failed)"
        )
    for o in result.failures:
        print(f"run {o.run_id} (seed {o.seed}) failed: {o.error}", file=sys.stderr)
    return 0 if not result.failures else 1


def cmd_sweep(args) -> int:
    config = _experiment_config(args)
    if not config.alphas:
        config = dataclasses.replace(config, alphas=DEFAULT_SWEEP)
    return _report(run_experiment(config), args.out_dir)


def cmd_bench(args) -> int:
    base = _experiment_config(args, timing="true")
    status = 0
    means = {}
    for algorithm in args.algorithms.split(","):
        config = dataclasses.replace(base, algorithm=algorithm.strip().upper())
        result = run_experiment(config)
        status |= _report(result, Path(args.out_dir) / config.algorithm.value)
        per_iter = [
            o.records[-1].wall_ms / len(o.records) for o in result.outcomes if o.ok and o.records
        ]
        means[config.algorithm.value] = float(np.mean(per_iter)) if per_iter else float("nan")
    for name, ms in means.items():
        print(f"{name}: {ms:.4g} ms per iteration")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miirl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="generate an environment file")
    p.add_argument("--env", required=True, choices=[k.value for k in EnvKind])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int)
    p.add_argument("--full-scale", action="store_true", help="32x32 M-worlds")
    p.add_argument("--n-objects", type=int, default=50)
    p.add_argument("--n-outer-colors", type=int, default=2)
    p.add_argument("--exclude-center", action="store_true",
                   help="BinaryWorld rules count the 8 surrounding cells only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("demo", help="sample expert demonstrations")
    p.add_argument("--env-file", required=True)
    p.add_argument("--intentions", required=True, help="comma list, e.g. A,B,C or 0,1")
    p.add_argument("--count", type=int, default=16, help="demonstrations per intention")
    p.add_argument("--length", type=int)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("train", help="train on a demonstration file")
    p.add_argument("--env-file", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config")
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--out-dir", required=True)
    _add_config_flags(p, skip={"full_scale"})
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained model")
    p.add_argument("--env-file", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--transfer-env")
    p.add_argument("--attribution", choices=ATTRIBUTIONS, default="map")
    p.set_defaults(func=cmd_evaluate)

    for name, func, helptext in (
        ("sweep", cmd_sweep, "multi-seed experiment over concentration values"),
        ("bench", cmd_bench, "per-iteration timing of the algorithms"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--config")
        p.add_argument("--full-scale", action="store_true")
        p.add_argument("--out-dir", required=True)
        if name == "bench":
            p.add_argument("--algorithms", default="SEM,MCEM")
        _add_config_flags(p, skip={"full_scale"})
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"miirl {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
