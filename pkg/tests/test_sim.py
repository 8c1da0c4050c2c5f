import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import empty_env, place
from lanerl.sim import (ACCEL, DECEL, GRID_ROWS, KMH, LEFT, N_ACTIONS, RIGHT, STAY, VEHICLE_LENGTH,
                        ConfigError, EnvConfig, EpisodeOver, TrafficView, create_env, dump_grid,
                        ego_mask, render_frame, reward_collision, reward_distance,
                        reward_efficiency, reward_total)


def lane_view(rel, lane=1, sensing=1.0):
    return TrafficView(3, 1, 0.0, 50.0, np.array([lane]), np.array([float(rel)]), np.array([40.0]),
                       (10.0, 80.0), sensing, 18.0)


# create_env

def test_rightmost_lane_is_densest():
    env = create_env(EnvConfig(rng_seed=3))
    counts = np.bincount(env.p_lane, minlength=3)
    assert counts[2] > counts[1] > counts[0]


def test_no_participants_only_ego_block():
    env = create_env(EnvConfig(participant_count=0, rng_seed=1))
    state = env.render_grid()
    for layer in state:
        assert np.array_equal(layer.astype(bool), ego_mask())


def test_same_seed_same_initial_state():
    a = create_env(EnvConfig(rng_seed=42)).render_grid()
    b = create_env(EnvConfig(rng_seed=42)).render_grid()
    assert np.array_equal(a, b)


def test_ego_starts_at_minimum_speed():
    env = create_env(EnvConfig(rng_seed=7))
    assert env.ego_v == 10.0
    assert 0 <= env.ego_lane < 3


def test_overfull_lane_rejected():
    with pytest.raises(ConfigError):
        create_env(EnvConfig(participant_count=5000, episode_length=400.0))


@pytest.mark.parametrize("bad", [dict(lanes=0, lane_densities=()), dict(lane_densities=(0.1, 2.0, 0.5)),
                                 dict(v_des=90.0), dict(beta_freq=0.0), dict(lambda_c=-1.0)])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        EnvConfig(**bad)


# step

def test_accelerate_at_top_speed_is_clamped():
    env = empty_env(v=80.0)
    out = env.step(ACCEL)
    assert out.velocity == 80.0


def test_decelerate_at_bottom_speed_is_clamped():
    env = empty_env(v=10.0)
    assert env.step(DECEL).velocity == 10.0


def test_collision_ends_episode_with_penalty():
    env = place(empty_env(lane=1, v=80.0), [(1, 7.0, 20.0)])
    out = env.step(STAY)
    assert out.collision == 1
    assert out.terminal and env.done
    assert out.reward_parts[0] == -10.0


def test_consecutive_lane_changes_divide_by_beta():
    env = empty_env(lane=2, v=40.0)
    first = env.step(LEFT)
    second = env.step(LEFT)
    lam = env.config.efficiency_weight
    assert first.reward_parts[2] == -lam * abs(40.0 - 75.0)
    assert second.reward_parts[2] == -lam * abs(40.0 - 75.0) / 0.7
    assert env.ego_lane == 0


def test_lane_change_off_road_is_stay_plus_violation():
    env = empty_env(lane=0, v=30.0)
    out = env.step(LEFT)
    assert out.lane_violation and out.lane_change == 0 and env.ego_lane == 0
    env = empty_env(lane=2, v=30.0)
    out = env.step(RIGHT)
    assert out.lane_violation and env.ego_lane == 2


def test_step_after_end_rejected():
    env = place(empty_env(lane=1, v=80.0), [(1, 7.0, 20.0)])
    env.step(STAY)
    with pytest.raises(EpisodeOver):
        env.step(STAY)


def test_unknown_action_rejected():
    with pytest.raises(ValueError):
        empty_env().step(N_ACTIONS)


def test_episode_ends_at_course_length():
    env = empty_env(v=80.0, episode_length=100.0)
    steps = 0
    while not env.done:
        out = env.step(STAY)
        steps += 1
    assert out.terminal and not out.collision
    assert env.distance >= 100.0
    assert steps == int(np.ceil(100.0 / (80.0 * KMH)))


# reward terms

def test_reward_collision_examples():
    assert reward_collision(0, 10.0) == 0
    assert reward_collision(1, 10.0) == -10.0
    assert reward_collision(1, 1.0) == -1.0


def test_reward_distance_examples():
    assert reward_distance(3.0, 18.0, 0, 0.05) == 0.0
    assert reward_distance(18.0, 18.0, 1, 0.05) == 0.0
    assert reward_distance(0.0, 20.0, 1, 1 / 20) == -1.0


def test_distance_weight_matches_brute_force_max():
    cfg = EnvConfig(d_des=20.0)
    gaps = np.arange(0.0, cfg.max_leader_gap + 1e-9, cfg.sensing_range)
    assert cfg.distance_weight == 1.0 / np.max(np.abs(gaps - 20.0))
    assert cfg.distance_weight == 1 / 20
    assert reward_distance(0.0, 20.0, 1, cfg.distance_weight) == -1.0


def test_reward_efficiency_examples():
    cfg = EnvConfig()
    speeds = np.arange(10.0, 80.0 + 1e-9, cfg.speed_step)
    lam = 1.0 / np.max(np.abs(speeds - 75.0))
    assert cfg.efficiency_weight == lam == 1 / 65
    assert reward_efficiency(75.0, 75.0, lam, False, 0.7) == 0.0
    assert reward_efficiency(10.0, 75.0, lam, False, 0.7) == -1.0
    assert reward_efficiency(10.0, 75.0, lam, True, 0.7) == pytest.approx(-1 / 0.7, abs=1e-12)
    assert round(reward_efficiency(10.0, 75.0, lam, True, 0.7), 4) == -1.4286


def test_reward_total_sums():
    assert reward_total(-10.0, -0.5, -0.25) == -10.75


# rendering

def test_initial_layers_identical():
    env = create_env(EnvConfig(rng_seed=5))
    s = env.render_grid()
    assert np.array_equal(s[0], s[1]) and np.array_equal(s[1], s[2])


def test_forward_edge_inclusive():
    at_edge = render_frame(lane_view(20.0))[0]
    beyond = render_frame(lane_view(21.0))[0]
    assert at_edge.sum() > ego_mask().sum()
    assert beyond.sum() == ego_mask().sum()
    assert lane_view(20.0).leader_sensed() is not None
    assert lane_view(21.0).leader_sensed() is None


def test_participant_block_is_18_cells():
    grid = render_frame(lane_view(-8.0, lane=0))[0]
    other = grid.astype(bool) & ~ego_mask()
    assert other.sum() == 18
    rows, cols = np.nonzero(other)
    assert np.ptp(rows) == 5 and np.ptp(cols) == 2


def test_dump_grid_marks_ego_and_traffic():
    env = place(empty_env(lane=1, v=30.0), [(0, 5.0, 30.0)])
    text = dump_grid(env.render_grid())
    lines = text.splitlines()
    assert len(lines) == GRID_ROWS
    assert text.count("E") == 18 and text.count("#") == 18


def test_style_layer_codes():
    env = create_env(EnvConfig(style_layer=True, rng_seed=2))
    s = env.observe()
    assert s.shape == (4, 30, 15)
    assert set(np.unique(s[3])) <= {0.0, 0.25, 0.5, 0.75}


# invariants over random episodes

actions = st.lists(st.integers(0, N_ACTIONS - 1), min_size=1, max_size=80)


def _blocks_overlap(env):
    for lane in range(env.config.lanes):
        xs = np.sort(env.p_x[env.p_lane == lane])
        if env.ego_lane == lane:
            xs = np.sort(np.append(xs, env.ego_x))
        if len(xs) > 1:
            gaps = np.diff(np.append(xs, xs[0] + env.config.ring_length))
            if np.any(gaps < VEHICLE_LENGTH - 1e-9):
                return True
    return False


@given(seed=st.integers(0, 2**31 - 1), acts=actions)
def test_step_invariants(seed, acts):
    env = create_env(EnvConfig(episode_length=600.0, rng_seed=seed))
    ego = ego_mask()
    beta = env.config.beta_freq
    for a in acts:
        if env.done:
            break
        out = env.step(a)
        r_c, r_d, r_e = out.reward_parts
        assert out.reward == r_c + r_d + r_e
        assert r_c in (0.0, -env.config.lambda_c)
        assert -1.0 / beta - 1e-12 <= r_e <= 0.0
        if out.lane_change:
            assert -1.0 - 1e-12 <= r_d <= 0.0
            assert a in (LEFT, RIGHT)
        else:
            assert r_d == 0.0
        if out.collision:
            assert out.terminal
        assert 0 <= env.ego_lane < env.config.lanes
        assert 10.0 <= env.ego_v <= 80.0
        s = env.render_grid()
        assert set(np.unique(s)) <= {0, 1}
        assert np.all(s[:, ego] == 1)
        if not env.done:
            assert not _blocks_overlap(env)


@given(seed=st.integers(0, 2**31 - 1), acts=actions)
def test_episode_trace_reproducible(seed, acts):
    def trace():
        env = create_env(EnvConfig(episode_length=600.0, rng_seed=seed))
        out = []
        for a in acts:
            if env.done:
                break
            o = env.step(a)
            out.append((o.reward, o.next_state.tobytes()))
        return out
    assert trace() == trace()
