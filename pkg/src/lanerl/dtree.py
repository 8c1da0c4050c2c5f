"""Rule-based lane-change decision tree, used as baseline and buffer seeder."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .sim import (STAY, LEFT, RIGHT, ACCEL, DECEL, KMH, Env, EnvConfig, TrafficView,
                  create_env)

HIGH_SPEED_RATIO = 0.8
HEADWAY_S = 2.0


class DtObservation(NamedTuple):
    vehicle_ahead: bool       # b0
    fast_or_following: bool   # b1
    left_empty: bool          # b2
    right_empty: bool         # b3


def extract_dt_observation(view: TrafficView, high_speed_ratio: float = HIGH_SPEED_RATIO) -> DtObservation:
    if isinstance(view, Env):
        view = view.view()
    gap = view.leader_sensed()
    b0 = gap is not None
    v_max = view.ego_speed_bounds[1]
    b1 = view.ego_v >= high_speed_ratio * v_max or (gap is not None and gap < view.d_des)
    b2 = view.lane_clear(view.ego_lane - 1, view.d_des)
    b3 = view.lane_clear(view.ego_lane + 1, view.d_des)
    return DtObservation(b0, bool(b1), b2, b3)


def dt_decide(obs: DtObservation) -> int:
    """Stay unless blocked; when blocked prefer the left lane, then the right."""
    if not obs.vehicle_ahead:
        return STAY
    if not obs.fast_or_following:
        return STAY
    if obs.left_empty:
        return LEFT
    if obs.right_empty:
        return RIGHT
    return STAY


def dt_policy(view: TrafficView) -> int:
    return dt_decide(extract_dt_observation(view))


def rule_policy(view: TrafficView, headway: float = HEADWAY_S) -> int:
    """Comparison baseline: decision tree for lane choice plus a headway-keeping
    speed rule whenever the tree says stay."""
    if isinstance(view, Env):
        view = view.view()
    action = dt_policy(view)
    if action != STAY:
        return action
    v_min, v_max = view.ego_speed_bounds
    gap = view.leader_gap()
    too_close = gap is not None and gap < headway * view.ego_v * KMH
    if too_close:
        return DECEL if view.ego_v > v_min else STAY
    v_des = view.v_des if view.v_des is not None else v_max
    if view.ego_v < min(v_max, v_des):
        return ACCEL
    return STAY


def seed_buffer(env_config: EnvConfig, buffer, count: int, seed_seq=None, encode=None) -> int:
    """Fill ``buffer`` with ``count`` transitions generated by the decision tree.

    Episodes restart with fresh seeds drawn from ``seed_seq`` (a
    ``numpy.random.SeedSequence``) whenever one ends.
    """
    if count <= 0:
        return 0
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(env_config.rng_seed)
    stored = 0
    while stored < count:
        cfg = _with_seed(env_config, seed_seq)
        env = create_env(cfg)
        state = env.render_grid()
        while not env.done and stored < count:
            action = dt_policy(env.view())
            out = env.step(action)
            nxt = env.render_grid()
            buffer.push(state, action, out.reward, nxt, out.terminal)
            stored += 1
            state = nxt
    return stored


def _with_seed(cfg: EnvConfig, seed_seq) -> EnvConfig:
    from dataclasses import replace
    child = seed_seq.spawn(1)[0]
    return replace(cfg, rng_seed=int(child.generate_state(1)[0]))
