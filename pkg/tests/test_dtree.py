import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import empty_env, place
from lanerl.agent import compute_action_mask
from lanerl.dtree import DtObservation, dt_decide, dt_policy, extract_dt_observation, seed_buffer
from lanerl.replay import PrioritizedReplay
from lanerl.sim import LEFT, RIGHT, STAY, EnvConfig, create_env


def test_empty_road_observation():
    obs = extract_dt_observation(empty_env(lane=1, v=30.0))
    assert not obs.vehicle_ahead
    assert obs.left_empty and obs.right_empty


def test_leftmost_lane_has_no_left_gap():
    for cars in ([], [(1, 0.0, 30.0)], [(0, 12.0, 30.0)]):
        obs = extract_dt_observation(place(empty_env(lane=0, v=30.0), cars))
        assert not obs.left_empty


def test_close_leader_sets_b0_and_b1():
    env = place(empty_env(lane=1, v=30.0), [(1, 6.0 + 10.0, 30.0)])
    obs = extract_dt_observation(env)
    assert obs.vehicle_ahead and obs.fast_or_following


def test_high_speed_sets_b1():
    env = place(empty_env(lane=1, v=65.0), [(1, 6.0 + 25.0 - 12.0, 40.0)])
    obs = extract_dt_observation(env)
    assert obs.vehicle_ahead and obs.fast_or_following


def test_decide_examples():
    assert dt_decide(DtObservation(True, True, True, True)) == LEFT
    assert dt_decide(DtObservation(True, True, False, True)) == RIGHT
    for rest in itertools.product([False, True], repeat=3):
        assert dt_decide(DtObservation(False, *rest)) == STAY
    assert dt_decide(DtObservation(True, False, True, True)) == STAY
    assert dt_decide(DtObservation(True, True, False, False)) == STAY


@given(st.tuples(st.booleans(), st.booleans(), st.booleans(), st.booleans()))
def test_decide_is_pure_and_lateral_only(flags):
    obs = DtObservation(*flags)
    assert dt_decide(obs) == dt_decide(DtObservation(*flags))
    assert dt_decide(obs) in (STAY, LEFT, RIGHT)


def test_seed_buffer_zero_is_noop():
    buf = PrioritizedReplay(16, (3, 30, 15))
    assert seed_buffer(EnvConfig(episode_length=500.0), buf, 0) == 0
    assert len(buf) == 0


def test_seed_buffer_fills_with_tree_actions():
    buf = PrioritizedReplay(1000, (3, 30, 15))
    n = seed_buffer(EnvConfig(episode_length=300.0), buf, 512, np.random.SeedSequence(3))
    assert n == 512 and len(buf) == 512
    assert set(np.unique(buf.actions[:512])) <= {STAY, LEFT, RIGHT}


def test_tree_never_changes_into_occupied_gap():
    seq = np.random.SeedSequence(11)
    steps = 0
    while steps < 10_000:
        env = create_env(EnvConfig(episode_length=2000.0,
                                   rng_seed=int(seq.spawn(1)[0].generate_state(1)[0])))
        while not env.done and steps < 10_000:
            view = env.view()
            a = dt_policy(view)
            if a in (LEFT, RIGHT):
                assert compute_action_mask(view)[a] == 1
            out = env.step(a)
            assert not out.lane_violation
            steps += 1
