"""Grid sweeps over run-config keys: one seeded train+evaluate trial per cell."""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .harness import RunConfig, evaluate_run, train, with_value
from .runs import fmt, unique_dir, write_csv
from .sim import ConfigError

CELL_METRICS = ("v_mean", "safety_ratio", "lc_mean", "sigma")


def parse_axes(axes) -> list:
    """Normalize ``{"agent.discount": [...], ...}`` or ``[(key, values), ...]``."""
    items = list(axes.items()) if isinstance(axes, dict) else [tuple(a) for a in axes]
    if not items:
        raise ConfigError("sweep needs at least one axis")
    out = []
    for key, values in items:
        values = list(values)
        if not values:
            raise ConfigError(f"axis {key!r} has no values")
        out.append((str(key), values))
    return out


def cell_configs(base: RunConfig, axes) -> list:
    """All grid cells in row-major order. Every key is checked on the base
    config before anything runs, so a typo fails fast."""
    axes = parse_axes(axes)
    for key, values in axes:
        with_value(base, key, values[0])
    cells = []
    for n, combo in enumerate(itertools.product(*(v for _, v in axes))):
        cfg = base
        for (key, _), value in zip(axes, combo):
            cfg = with_value(cfg, key, value)
        seed = int(np.random.SeedSequence([base.rng_seed, n]).generate_state(1)[0])
        cells.append((n, combo, with_value(cfg, "rng_seed", seed)))
    return cells


def run_cell(cfg: RunConfig) -> dict:
    result = train(cfg)
    m = evaluate_run(result)
    return {"v_mean": m.v_mean, "safety_ratio": m.safety_ratio, "lc_mean": m.lc_mean,
            "sigma": m.sigma, "final_score": float(np.mean(result.scores[-10:])) if result.records else None}


def sweep(base: RunConfig, axes, out_dir=None, workers: int = 1, runner=run_cell) -> dict:
    """Run every cell and write ``cells.csv`` plus ``grid.csv`` (sigma pivot).

    With two axes the grid has the first axis down the rows and the second
    across the columns; with one axis it is a single column.
    """
    axes = parse_axes(axes)
    cells = cell_configs(base, axes)
    configs = [c for _, _, c in cells]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(runner, configs))
    else:
        results = [runner(c) for c in configs]

    keys = [k for k, _ in axes]
    rows = []
    for (n, combo, cfg), res in zip(cells, results):
        rows.append([n, *combo, cfg.rng_seed, cfg.fingerprint()] + [res[m] for m in CELL_METRICS])
    out = {"axes": axes, "rows": rows, "grid": pivot(axes, results)}
    if out_dir is not None:
        d = unique_dir(Path(out_dir) / "sweep")
        write_csv(d / "cells.csv", ["cell", *keys, "seed", "fingerprint", *CELL_METRICS], rows)
        grid_header, grid_rows = out["grid"]
        write_csv(d / "grid.csv", grid_header, grid_rows)
        (d / "sweep.json").write_text(json.dumps(
            {"base": base.to_dict(), "axes": [[k, [fmt(v) for v in vals]] for k, vals in axes]},
            indent=2, sort_keys=True))
        out["dir"] = d
    return out


def pivot(axes, results, metric: str = "sigma"):
    if len(axes) == 1:
        key, values = axes[0]
        return [key, metric], [[v, r[metric]] for v, r in zip(values, results)]
    if len(axes) != 2:
        raise ConfigError("pivot supports one or two axes")
    (rk, rvals), (ck, cvals) = axes
    header = [f"{rk}\\{ck}", *cvals]
    body = []
    for i, rv in enumerate(rvals):
        body.append([rv] + [results[i * len(cvals) + j][metric] for j in range(len(cvals))])
    return header, body
