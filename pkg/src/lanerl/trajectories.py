"""Labeled trajectory windows: CSV I/O, grid reconstruction and merge/non-merge scoring."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .agent import DDQNAgent, compute_action_mask, select_action
from .dtree import dt_policy
from .sim import LEFT, RIGHT, EnvConfig, TrafficView, create_env, render_frame, stack_state

HEADER = ("window_id", "t", "vehicle_id", "lane", "x_m", "v", "is_ego", "label")
LABELS = ("non_merge", "merge")
TABLE_ROWS = {"non_merge": "Non-merge (lane stay)", "merge": "Merge (lane change)"}
MIN_SLOTS = 3


class DatasetError(ValueError):
    pass


@dataclass
class Window:
    window_id: str
    label: str
    slots: list  # per timeslot: (ego (lane, x, v), others [(lane, x, v)...]) in time order


def read_dataset(path) -> list:
    path = Path(path)
    windows: dict = {}
    labels: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != HEADER:
            raise DatasetError(f"{path}:1: expected header {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise DatasetError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
            wid, t, vid, lane, x, v, is_ego, label = (c.strip() for c in row)
            try:
                t_i, lane_i = int(t), int(lane)
                x_f, v_f = float(x), float(v)
                ego = {"1": True, "0": False, "true": True, "false": False}[is_ego.lower()]
            except (ValueError, KeyError):
                raise DatasetError(f"{path}:{lineno}: malformed value in {row}") from None
            if label not in LABELS:
                raise DatasetError(f"{path}:{lineno}: label {label!r} not in {LABELS}")
            if lane_i < 0:
                raise DatasetError(f"{path}:{lineno}: negative lane")
            if labels.setdefault(wid, label) != label:
                raise DatasetError(f"{path}:{lineno}: window {wid} has more than one label")
            slot = windows.setdefault(wid, {}).setdefault(t_i, {"ego": None, "others": []})
            if ego:
                if slot["ego"] is not None:
                    raise DatasetError(f"{path}:{lineno}: window {wid} t={t_i} has two ego rows")
                slot["ego"] = (lane_i, x_f, v_f)
            else:
                slot["others"].append((lane_i, x_f, v_f))
    if not windows:
        raise DatasetError(f"{path}: no data rows")
    out = []
    for wid, slots in windows.items():
        ts = sorted(slots)
        if len(ts) < MIN_SLOTS:
            raise DatasetError(f"{path}: window {wid} has {len(ts)} timeslots, need {MIN_SLOTS}")
        for t in ts:
            if slots[t]["ego"] is None:
                raise DatasetError(f"{path}: window {wid} t={t} has no ego row")
        out.append(Window(wid, labels[wid], [(slots[t]["ego"], slots[t]["others"]) for t in ts]))
    return out


def write_dataset(path, windows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for win in windows:
            for t, (ego, others) in enumerate(win.slots):
                w.writerow([win.window_id, t, 0, ego[0], repr(ego[1]), repr(ego[2]), 1, win.label])
                for k, (lane, x, v) in enumerate(others, start=1):
                    w.writerow([win.window_id, t, k, lane, repr(x), repr(v), 0, win.label])


def slot_view(slot, env_config: EnvConfig, lanes: Optional[int] = None) -> TrafficView:
    (e_lane, e_x, e_v), others = slot
    arr = np.array(others, dtype=np.float64).reshape(-1, 3)
    return TrafficView(
        lanes=lanes or env_config.lanes, ego_lane=int(e_lane), ego_x=float(e_x), ego_v=float(e_v),
        lane=arr[:, 0].astype(np.int64), x=arr[:, 1], v=arr[:, 2],
        ego_speed_bounds=env_config.ego_speed_bounds, sensing_range=env_config.sensing_range,
        d_des=env_config.desired_gap, road_length=None, style=None, v_des=env_config.v_des)


def window_state(win: Window, env_config: EnvConfig):
    """(code tensor of the last three slots, view at the last slot)."""
    views = [slot_view(s, env_config) for s in win.slots[-MIN_SLOTS:]]
    frames = [render_frame(v) for v in views]
    return stack_state(frames), views[-1]


def dt_window_policy(state, view) -> int:
    return dt_policy(view)


def agent_window_policy(agent: DDQNAgent, masked: bool = True) -> Callable:
    rng = np.random.default_rng(0)

    def policy(state, view):
        mask = compute_action_mask(view, agent.config.headway) if masked else np.ones(5, np.int8)
        return select_action(agent.q_values(state), mask, 0.0, rng)
    return policy


@dataclass
class ClassResult:
    label: str
    windows: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.windows if self.windows else float("nan")


def eval_trajectories(windows, policy, env_config: Optional[EnvConfig] = None) -> list:
    """Per-class accuracy rows, non-merge first; merge predicted iff the policy
    picks a lane change."""
    if not windows:
        raise DatasetError("dataset has no windows")
    env_config = env_config or EnvConfig()
    counts = {lab: [0, 0] for lab in LABELS}
    for win in windows:
        state, view = window_state(win, env_config)
        predicted = "merge" if policy(state, view) in (LEFT, RIGHT) else "non_merge"
        counts[win.label][0] += 1
        counts[win.label][1] += predicted == win.label
    return [ClassResult(lab, *counts[lab]) for lab in LABELS]


def table_rows(results) -> list:
    return [(TABLE_ROWS[r.label], r.windows, r.correct, r.accuracy) for r in results]


TABLE_HEADER = ("class", "windows", "correct", "accuracy")


def synthetic_dt_dataset(env_config: EnvConfig, n_windows: int, seed: int = 0, radius: float = 60.0) -> list:
    """Windows labeled by the decision tree's own choice at their last slot.

    The ego is driven by the rule-based policy so the windows cover a range
    of speeds. Each class stops collecting at half the total, so the set is
    balanced. Only vehicles within ``radius`` meters of the ego are written.
    """
    from .dtree import rule_policy
    seq = np.random.SeedSequence(seed)
    windows, per_class = [], {lab: 0 for lab in LABELS}
    want = {"merge": n_windows // 2, "non_merge": n_windows - n_windows // 2}
    attempts = 0
    while sum(per_class.values()) < n_windows:
        attempts += 1
        if attempts > 200:
            raise RuntimeError("could not collect enough windows of each class")
        cfg = replace(env_config, rng_seed=int(seq.spawn(1)[0].generate_state(1)[0]))
        env = create_env(cfg)
        recent = []
        while not env.done:
            recent = (recent + [_snapshot(env, radius)])[-MIN_SLOTS:]
            action = rule_policy(env.view())
            if len(recent) == MIN_SLOTS:
                label = "merge" if dt_policy(env.view()) in (LEFT, RIGHT) else "non_merge"
                if per_class[label] < want[label]:
                    per_class[label] += 1
                    windows.append(Window(f"w{len(windows)}", label, list(recent)))
                    recent = []
            env.step(action)
            if sum(per_class.values()) >= n_windows:
                break
    return windows


def _snapshot(env, radius):
    """Ego plus nearby participants in a straight-road frame anchored on the odometer."""
    view = env.view()
    rel = view.rel()
    near = np.abs(rel) <= radius
    base = env.distance
    others = [(int(l), float(base + r), float(v))
              for l, r, v in zip(view.lane[near], rel[near], view.v[near])]
    return ((int(view.ego_lane), float(base), float(view.ego_v)), others)
