"""Run directories: training artifacts, evaluation results and CSV export."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

from .agent import DDQNAgent
from .harness import (EpisodeRecord, RunConfig, RunMetrics, TrainResult, evaluate_run)

METRICS_HEADER = ("run_id", "baseline", "seed", "episodes", "v_mean", "safety_ratio", "lc_mean", "sigma")
LOG_FIELDS = tuple(EpisodeRecord.__dataclass_fields__)


class IncompleteRun(RuntimeError):
    pass


def fmt(x) -> str:
    """Stable text for CSV cells; infinite sigma becomes the ``inf`` sentinel."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def unique_dir(path) -> Path:
    """``path`` if unused, else ``path-1``, ``path-2``... Never reuses a directory."""
    path = Path(path)
    candidate, n = path, 0
    while candidate.exists():
        n += 1
        candidate = path.with_name(f"{path.name}-{n}")
    candidate.mkdir(parents=True)
    return candidate


def run_id(cfg: RunConfig) -> str:
    return f"{cfg.baseline}-s{cfg.rng_seed}-{cfg.fingerprint()[:8]}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _write_log(path, records):
    write_csv(path, LOG_FIELDS, ([getattr(r, f) for f in LOG_FIELDS] for r in records))


def _read_log(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpisodeRecord(
                int(row["episode"]), int(row["steps"]), float(row["total_reward"]),
                float(row["mean_reward"]), float(row["mean_velocity"]), float(row["distance"]),
                row["collided"] == "1", int(row["lane_changes"]), int(row["masked_violations"]),
                int(row["lane_violations"]),
                None if row["score"] in ("", "None") else float(row["score"])))
    return out


def save_training(result: TrainResult, out_dir) -> Path:
    """Write config, references, per-episode log and checkpoint into a fresh run dir."""
    cfg = result.config
    d = unique_dir(Path(out_dir) / run_id(cfg))
    (d / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    (d / "references.json").write_text(json.dumps(
        {"r_rule": result.r_rule, "r_random": result.r_random, "seeded": result.seeded,
         "negative_samples": result.negative_samples, "train_steps": result.train_steps},
        indent=2, sort_keys=True))
    _write_log(d / "train_log.csv", result.records)
    if result.agent is not None:
        result.agent.save(d / "checkpoint")
    return d


def load_training(run_dir) -> TrainResult:
    d = Path(run_dir)
    for name in ("config.json", "references.json", "train_log.csv"):
        if not (d / name).exists():
            raise IncompleteRun(f"{d}: missing {name}; run training first")
    cfg = RunConfig.from_dict(json.loads((d / "config.json").read_text()))
    refs = json.loads((d / "references.json").read_text())
    agent = None
    if cfg.variant.learns:
        if not (d / "checkpoint" / "agent.json").exists():
            raise IncompleteRun(f"{d}: missing checkpoint")
        agent = DDQNAgent.load(d / "checkpoint")
    return TrainResult(cfg, _read_log(d / "train_log.csv"), refs["r_rule"], refs["r_random"], agent,
                       refs.get("seeded", 0), refs.get("negative_samples", 0),
                       train_steps=refs.get("train_steps", 0))


def save_evaluation(metrics: RunMetrics, run_dir):
    d = Path(run_dir)
    _write_log(d / "eval_episodes.csv", metrics.episodes)
    (d / "eval.json").write_text(json.dumps(
        {"v_mean": metrics.v_mean, "safety_ratio": metrics.safety_ratio,
         "lc_mean": metrics.lc_mean, "sigma": fmt(metrics.sigma),
         "sigma_infinite": math.isinf(metrics.sigma)}, indent=2, sort_keys=True))


def load_evaluation(run_dir) -> RunMetrics:
    d = Path(run_dir)
    if not (d / "eval_episodes.csv").exists():
        raise IncompleteRun(f"{d}: no evaluation; run eval first")
    return RunMetrics.from_episodes(_read_log(d / "eval_episodes.csv"))


def evaluate_dir(run_dir, n_episodes=None) -> RunMetrics:
    metrics = evaluate_run(load_training(run_dir), n_episodes)
    save_evaluation(metrics, run_dir)
    return metrics


def metrics_rows(rid: str, cfg: RunConfig, metrics: RunMetrics) -> list:
    """One aggregate row, then one row per evaluation episode (run_id suffixed
    with the episode index; lane changes and safety are that episode's)."""
    rows = [(rid, cfg.baseline, cfg.rng_seed, len(metrics.episodes), metrics.v_mean,
             metrics.safety_ratio, metrics.lc_mean, metrics.sigma)]
    for ep in metrics.episodes:
        one = RunMetrics.from_episodes([ep])
        rows.append((f"{rid}#{ep.episode}", cfg.baseline, cfg.rng_seed, 1, one.v_mean,
                     one.safety_ratio, one.lc_mean, one.sigma))
    return rows


def export(run_dir) -> dict:
    """metrics.csv, scores.csv and x,y plot-data series for the score curve and
    the per-episode driving metrics."""
    d = Path(run_dir)
    result = load_training(d)
    metrics = load_evaluation(d)
    cfg = result.config
    rid = d.name
    write_csv(d / "metrics.csv", METRICS_HEADER, metrics_rows(rid, cfg, metrics))
    write_csv(d / "scores.csv", ("episode", "score"),
              ((r.episode + 1, r.score) for r in result.records))
    plots = {
        "plot_score.csv": [(r.episode + 1, r.score) for r in result.records],
        "plot_train_velocity.csv": [(r.episode + 1, r.mean_velocity) for r in result.records],
        "plot_train_lane_changes.csv": [(r.episode + 1, r.lane_changes) for r in result.records],
        "plot_train_safety.csv": _running_safety(result.records),
    }
    for name, series in plots.items():
        write_csv(d / name, ("x", "y"), series)
    return {"metrics": d / "metrics.csv", "scores": d / "scores.csv",
            "plots": [d / n for n in plots]}


def _running_safety(records):
    out, safe = [], 0
    for n, r in enumerate(records, start=1):
        safe += not r.collided
        out.append((n, safe / n))
    return out


def config_from_file(path) -> RunConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunConfig.from_dict(data)


def summary(metrics: RunMetrics) -> dict:
    d = {k: v for k, v in asdict(metrics).items() if k not in ("episodes", "scores")}
    d["sigma"] = fmt(metrics.sigma)
    return d
