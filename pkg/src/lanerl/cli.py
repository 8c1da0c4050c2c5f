"""Command-line entry point: ``lanerl <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import runs
from .dtree import dt_policy, seed_buffer
from .harness import (BASELINES, RunConfig, desk_scale, evaluate, masked_random_policy,
                      rule_based_policy, train, with_value, _seed_streams)
from .replay import PrioritizedReplay
from .sim import ConfigError


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="run config JSON (unknown keys rejected)")
    p.add_argument("--seed", type=int, help="override rng_seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--baseline", choices=BASELINES, help="override the baseline selector")
    p.add_argument("--desk", action="store_true",
                   help="start from the small desk-scale defaults instead of full scale")
    return p


def load_config(args) -> RunConfig:
    if args.config is not None:
        data = json.loads(args.config.read_text(encoding="utf-8"))
        cfg = RunConfig.from_dict(data)
        if args.desk:
            raise ConfigError("--desk and --config are mutually exclusive")
    else:
        cfg = desk_scale() if args.desk else RunConfig()
    if args.seed is not None:
        cfg = with_value(cfg, "rng_seed", args.seed)
    if args.baseline is not None:
        cfg = with_value(cfg, "baseline", args.baseline)
    if args.out is not None:
        cfg = with_value(cfg, "out_dir", str(args.out))
    if getattr(args, "episodes", None) is not None:
        cfg = with_value(cfg, "episodes", args.episodes)
    return cfg


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def cmd_train(args):
    cfg = load_config(args)

    def log(rec):
        if not args.quiet:
            print(f"episode {rec.episode + 1}: steps={rec.steps} mean_r={rec.mean_reward:.4f} "
                  f"score={rec.score:.3f} collided={int(rec.collided)}", flush=True)

    result = train(cfg, log=log)
    d = runs.save_training(result, cfg.out_dir)
    if args.eval:
        runs.evaluate_dir(d)
        runs.export(d)
    print(d)


def cmd_eval(args):
    metrics = runs.evaluate_dir(args.run_dir, args.episodes)
    _print(runs.summary(metrics))


def cmd_export(args):
    out = runs.export(args.run_dir)
    _print({k: [str(p) for p in v] if isinstance(v, list) else str(v) for k, v in out.items()})


def _parse_axis(text):
    key, sep, values = text.partition("=")
    if not sep or not values:
        raise ConfigError(f"axis must look like key=v1,v2,...: {text!r}")
    return key, [json.loads(v) for v in values.split(",")]


def cmd_sweep(args):
    from .sweep import sweep
    cfg = load_config(args)
    axes = [_parse_axis(a) for a in args.axis]
    out = sweep(cfg, axes, out_dir=cfg.out_dir, workers=args.workers or cfg.workers)
    print(out["dir"])


def cmd_dt_run(args):
    cfg = load_config(args)
    streams = _seed_streams(cfg.rng_seed)
    if args.policy == "dt":
        policy = lambda env, state: dt_policy(env.view())  # noqa: E731
    elif args.policy == "rule":
        policy = rule_based_policy
    else:
        policy = masked_random_policy(np.random.default_rng(streams["policy"]))
    metrics = evaluate(policy, cfg.env, args.episodes, streams["eval_envs"], cfg.agent.headway)
    if args.out is not None:
        d = runs.unique_dir(args.out / f"{args.policy}-s{cfg.rng_seed}")
        runs.save_evaluation(metrics, d)
        print(d)
    _print(runs.summary(metrics))


def cmd_seed_buffer(args):
    cfg = load_config(args)
    buf = PrioritizedReplay(cfg.buffer_size, cfg.network.input_shape)
    n = seed_buffer(cfg.env, buf, args.count or cfg.seed_transitions, _seed_streams(cfg.rng_seed)["seeding"])
    out = args.out or Path("seed_buffer.npz")
    buf.save(out)
    _print({"transitions": n, "file": str(out)})


def cmd_traj_eval(args):
    from . import trajectories as tr
    cfg = load_config(args)
    if args.synthesize:
        windows = tr.synthetic_dt_dataset(cfg.env, args.synthesize, seed=cfg.rng_seed)
        tr.write_dataset(args.dataset, windows)
    windows = tr.read_dataset(args.dataset)
    if args.run is not None:
        result = runs.load_training(args.run)
        if result.agent is None:
            raise ConfigError(f"{args.run} holds a non-learning baseline; use --policy dt")
        policy = tr.agent_window_policy(result.agent, result.config.variant.masked)
        env_cfg = result.config.env
    else:
        policy, env_cfg = tr.dt_window_policy, cfg.env
    rows = tr.table_rows(tr.eval_trajectories(windows, policy, env_cfg))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        runs.write_csv(args.out / "trajectory_eval.csv", tr.TABLE_HEADER, rows)
    for name, n, correct, acc in rows:
        print(f"{name:<24} {correct:>5}/{n:<5} {acc:.1%}")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = argparse.ArgumentParser(prog="lanerl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="train (or play) one baseline")
    t.add_argument("--episodes", type=int)
    t.add_argument("--eval", action="store_true", help="evaluate and export right after training")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a trained run directory")
    e.add_argument("run_dir", type=Path)
    e.add_argument("--episodes", type=int)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="grid sweep over config keys")
    s.add_argument("--axis", action="append", required=True,
                   help="key=v1,v2,... (JSON values); repeat for a second axis")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("dt-run", parents=[common], help="play the decision tree or a reference policy")
    d.add_argument("--policy", choices=("dt", "rule", "random"), default="dt")
    d.add_argument("--episodes", type=int, default=10)
    d.set_defaults(func=cmd_dt_run)

    b = sub.add_parser("seed-buffer", parents=[common], help="write a DT-seeded replay buffer snapshot")
    b.add_argument("--count", type=int)
    b.set_defaults(func=cmd_seed_buffer)

    j = sub.add_parser("traj-eval", parents=[common], help="merge/non-merge accuracy on a trajectory CSV")
    j.add_argument("dataset", type=Path)
    j.add_argument("--run", type=Path, help="trained run directory; default is the decision tree")
    j.add_argument("--synthesize", type=int, metavar="N",
                   help="first write N synthetic DT-labeled windows to DATASET")
    j.set_defaults(func=cmd_traj_eval)

    x = sub.add_parser("export", parents=[common], help="write metrics.csv, scores.csv and plot data")
    x.add_argument("run_dir", type=Path)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, runs.IncompleteRun, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
