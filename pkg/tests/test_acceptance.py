"""The ten acceptance criteria, each printing one PASS/FAIL line.

Criteria 5 to 7 share one set of desk-scale training runs (four learners
times five seeds plus the masked-random baseline), built once per session.
"""
import time

import numpy as np
import pytest
from scipy import stats

from lanerl import trajectories as tr
from lanerl.agent import AgentConfig, DDQNAgent, ddqn_targets, dqn_targets, epsilon
from lanerl.harness import (decision_efficiency, desk_scale, evaluate_run, first_episode_reaching,
                            masked_random_policy, normalized_score, run_episode, episode_configs,
                            train)
from lanerl.nn import Conv2D, Dense, Network, NetworkSpec, QNetwork, grad_check
from lanerl.replay import PrioritizedReplay
from lanerl.sim import (EnvConfig, reward_collision, reward_distance, reward_efficiency,
                        reward_total)
from lanerl.style import generate_style_dataset, rbf_kernel, train_classifier
from lanerl.sweep import sweep

SEEDS = (0, 1, 2, 3, 4)
LEARNERS = ("drnet", "drnet_no_init", "ddqn_plain", "drnet_no_subspace")


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------

def test_criterion_01_gradient_check(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    net = QNetwork(NetworkSpec(input_shape=(3, 8, 8)), seed=1)
    x = rng.integers(0, 2, size=(3, 8, 8)).astype(float)
    errors = {"default@8x8": grad_check(net, x)[0]}
    layers = {
        "conv/relu": (Conv2D(2, 3, 3, 1, "relu", rng=rng), (2, 6, 6)),
        "conv/stride2": (Conv2D(2, 3, 3, 2, "relu", rng=rng), (2, 7, 7)),
        "conv/linear": (Conv2D(2, 3, 2, 1, "identity", rng=rng), (2, 5, 4)),
        "dense/relu": (Dense(10, 6, "relu", rng=rng), (10,)),
        "dense/linear": (Dense(10, 6, "identity", rng=rng), (10,)),
    }
    for name, (layer, shape) in layers.items():
        errors[name] = grad_check(Network([layer], shape), rng.normal(size=shape))[0]
    elapsed = time.perf_counter() - start
    worst = max(errors.values())
    report(capsys, 1, worst < 1e-5 and elapsed < 60,
           f"max rel error {worst:.2e} over {len(errors)} checks, {elapsed:.1f}s")


# 2 ---------------------------------------------------------------------------

def test_criterion_02_sum_tree(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    shape = (1, 1, 1)
    buf = PrioritizedReplay(257, shape)
    z = np.zeros(shape, np.uint8)
    worst = 0.0
    for _ in range(10_000):
        if len(buf) == 0 or rng.random() < 0.5:
            buf.push(z, 0, 0.0, z, False)  # evicts once full
        else:
            idx = rng.integers(0, len(buf), size=rng.integers(1, 8))
            buf.update_priorities(idx, rng.normal(0, 5, size=len(idx)))
        leaves = buf.priorities[:len(buf)] ** buf.alpha
        worst = max(worst, abs(buf.tree.total - leaves.sum()))
    fixed = PrioritizedReplay(10, shape)
    for _ in range(10):
        fixed.push(z, 0, 0.0, z, False)
    fixed.update_priorities(np.arange(10), np.arange(1.0, 11.0))
    # single draws, so counts are i.i.d. multinomial (stratified batches
    # would be underdispersed and make the test toothless)
    counts = np.bincount([fixed.sample(1, rng).indices[0] for _ in range(100_000)], minlength=10)
    expected = fixed.probabilities() * counts.sum()
    p = stats.chisquare(counts, expected).pvalue
    elapsed = time.perf_counter() - start
    report(capsys, 2, worst <= 1e-9 and p > 0.01 and elapsed < 30,
           f"max |root - sum| {worst:.1e}, chi2 p={p:.3f} on 100000 draws, {elapsed:.1f}s")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_mask_safety(capsys):
    start = time.perf_counter()
    cfg = EnvConfig(episode_length=2000.0)
    policy = masked_random_policy(np.random.default_rng(0))
    steps = violations = lane_violations = 0
    seq = np.random.SeedSequence(3)
    while steps < 10_000:
        rec = run_episode(episode_configs(cfg, seq, 1)[0], policy)
        steps += rec.steps
        violations += rec.masked_violations
        lane_violations += rec.lane_violations
    elapsed = time.perf_counter() - start
    report(capsys, 3, violations == 0 and lane_violations == 0 and elapsed < 120,
           f"{steps} steps, {violations} masked actions executed, "
           f"{lane_violations} lane departures, {elapsed:.1f}s")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_update_rules(capsys):
    start = time.perf_counter()
    checks = []
    close = lambda a, b: abs(a - b) <= 1e-12  # noqa: E731
    # collision, distance, efficiency, total
    checks += [reward_collision(0, 10) == 0, reward_collision(1, 10) == -10, reward_collision(1, 1) == -1]
    checks += [reward_distance(4.0, 18.0, 0, 0.1) == 0, reward_distance(18.0, 18.0, 1, 0.1) == 0,
               close(reward_distance(0.0, 20.0, 1, 1 / 20), -1.0)]
    lam_e = 1.0 / max(abs(v - 75.0) for v in np.arange(10.0, 80.01, 5.0))
    checks += [reward_efficiency(75, 75, lam_e, False, 0.7) == 0,
               close(reward_efficiency(10, 75, lam_e, False, 0.7), -1.0),
               close(reward_efficiency(10, 75, lam_e, True, 0.7), -1 / 0.7)]
    checks += [reward_total(-10.0, -0.25, -0.5) == -10.75]
    # DDQN target and TD error on linear nets with known outputs
    def bias_net(b):
        layer = Dense(2, 5, "identity", rng=np.random.default_rng(0))
        layer.W[...] = 0.0
        layer.b[...] = b
        return Network([layer], (2,))
    online, target = bias_net([2.0, 0, 5.0, 0, 0]), bias_net([9.0, 9.0, 2.0, 9.0, 9.0])
    y = ddqn_targets([1.0], np.zeros((1, 2)), [False], online, target, 0.9)[0]
    checks += [close(y, 2.8), ddqn_targets([-10.0], np.zeros((1, 2)), [True], online, target, 0.9)[0] == -10]
    checks += [close(y - online.forward(np.zeros(2))[0], 0.8)]
    agent = DDQNAgent(NetworkSpec(input_shape=(3, 6, 5), conv_layers=1, first_channels=2, channels=2,
                                  hidden_units=4), AgentConfig(), seed=0)
    for net in (agent.online, agent.target):
        for layer in net.layers:
            layer.W[...] = 0.0
            layer.b[...] = 0.0
    s = np.zeros((3, 6, 5), np.uint8)
    checks += [agent.td_error(s, 2, -1.0, s, False) == -1.0]
    # efficiency, normalized score, exploration
    checks += [close(decision_efficiency(60.0, 0.9, 30.0), 1.8), decision_efficiency(60.0, 0.0, 3.0) == 0]
    checks += [normalized_score(-0.3, -0.3, -0.8) == 1.0, normalized_score(-0.8, -0.3, -0.8) == 0.0,
               close(normalized_score(-0.55, -0.3, -0.8), 0.5)]
    checks += [epsilon(0) == 1.0, epsilon(10**5) == 0.001, close(epsilon(10), 0.93 ** 10)]
    # DDQN collapses to DQN when both networks hold the same parameters
    net = QNetwork(NetworkSpec(input_shape=(3, 6, 5), conv_layers=1, first_channels=3, channels=3,
                               hidden_units=6), seed=2)
    rng = np.random.default_rng(1)
    nxt = rng.integers(0, 2, size=(1000, 3, 6, 5)).astype(np.uint8)
    r = rng.normal(size=1000)
    term = rng.random(1000) < 0.1
    collapse = np.array_equal(ddqn_targets(r, nxt, term, net, net.copy(), 0.93),
                              dqn_targets(r, nxt, term, net, 0.93))
    elapsed = time.perf_counter() - start
    report(capsys, 4, all(checks) and collapse and elapsed < 30,
           f"{sum(checks)}/{len(checks)} formula examples, DDQN->DQN collapse on 1000 "
           f"transitions: {collapse}, {elapsed:.1f}s")


# 5, 6, 7 -------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_runs():
    out = {"time": {}}
    for baseline in ("random",) + LEARNERS:
        start = time.perf_counter()
        for seed in SEEDS:
            result = train(desk_scale(baseline=baseline, rng_seed=seed))
            entry = {"final": float(np.mean(result.scores[-10:])),
                     "first": first_episode_reaching(result.scores)}
            if baseline != "random":
                m = evaluate_run(result)
                entry.update(sigma=m.sigma, safety=m.safety_ratio)
            out[baseline, seed] = entry
        out["time"][baseline] = time.perf_counter() - start
    return out


def _median(runs, baseline, key):
    return float(np.median([runs[baseline, s][key] for s in SEEDS]))


def test_criterion_05_desk_learning(capsys, desk_runs):
    drnet = _median(desk_runs, "drnet", "final")
    rand = _median(desk_runs, "random", "final")
    minutes = sum(desk_runs["time"][b] for b in ("random", "drnet", "drnet_no_init", "ddqn_plain")) / 60
    per_seed = ", ".join(f"{desk_runs['drnet', s]['final']:.2f}" for s in SEEDS)
    report(capsys, 5, drnet >= 1.0 and -0.2 <= rand <= 0.2 and minutes <= 30,
           f"DRNet median final-10 score {drnet:.3f} (seeds: {per_seed}; need >= 1.0), "
           f"masked random {rand:.3f} (need within +-0.2), {minutes:.1f} min")


def test_criterion_06_ablation_direction(capsys, desk_runs):
    sig = {b: _median(desk_runs, b, "sigma") for b in ("drnet", "drnet_no_init", "ddqn_plain")}
    firsts = [desk_runs["ddqn_plain", s]["first"] for s in SEEDS]
    plain_first = float(np.median([np.inf if f is None else f for f in firsts]))
    drnet_firsts = [desk_runs["drnet", s]["first"] for s in SEEDS]
    drnet_first = float(np.median([np.inf if f is None else f for f in drnet_firsts]))
    ok = (sig["drnet"] >= sig["drnet_no_init"] and sig["drnet"] >= sig["ddqn_plain"]
          and drnet_first <= plain_first)
    report(capsys, 6, ok,
           f"median sigma DRNet {sig['drnet']:.3f}, w/o init {sig['drnet_no_init']:.3f}, "
           f"plain DDQN {sig['ddqn_plain']:.3f}; first episode with score >= 1: "
           f"DRNet median {drnet_first}, plain DDQN median {plain_first}")


def test_criterion_07_safety_direction(capsys, desk_runs):
    s_drnet = _median(desk_runs, "drnet", "safety")
    s_nosub = _median(desk_runs, "drnet_no_subspace", "safety")
    below = sum(desk_runs["ddqn_plain", s]["safety"] < desk_runs["drnet", s]["safety"] for s in SEEDS)
    report(capsys, 7, s_drnet >= s_nosub and below >= 3,
           f"median S DRNet {s_drnet:.2f} vs w/o subspace {s_nosub:.2f}; "
           f"plain DDQN below DRNet in {below}/5 seeds")


# 8 ---------------------------------------------------------------------------

def test_criterion_08_style_classifier(capsys):
    start = time.perf_counter()
    X_train, y_train = generate_style_dataset(600, seed=101)
    X_test, y_test = generate_style_dataset(300, seed=202)
    clf = train_classifier(X_train, y_train)
    acc = clf.accuracy(X_test, y_test)
    rng = np.random.default_rng(0)
    min_eig = min(np.linalg.eigvalsh(rbf_kernel(Z, Z, s)).min()
                  for Z, s in ((rng.normal(0, rng.uniform(0.1, 5), size=(10, 4)), rng.uniform(0.2, 3))
                               for _ in range(100)))
    elapsed = time.perf_counter() - start
    report(capsys, 8, acc >= 0.9 and min_eig >= -1e-8 and elapsed < 120,
           f"held-out accuracy {acc:.3f} on 300 windows, min kernel eigenvalue {min_eig:.1e} "
           f"over 100 sets, {elapsed:.1f}s")


# 9 ---------------------------------------------------------------------------

def test_criterion_09_sweep(capsys, tmp_path):
    start = time.perf_counter()
    base = desk_scale(episodes=3, eval_episodes=2, rng_seed=9, **{"env.episode_length": 500.0})
    axes = [("agent.discount", [0.87, 0.93, 0.99]), ("buffer_size", [1000, 2000, 5000])]
    first = sweep(base, axes, out_dir=tmp_path)
    second = sweep(base, axes, out_dir=tmp_path)
    read = lambda d, n: (d / n).read_bytes()  # noqa: E731
    same = all(read(first["dir"], n) == read(second["dir"], n) for n in ("cells.csv", "grid.csv"))
    cells = read(first["dir"], "cells.csv").decode().strip().splitlines()
    grid = read(first["dir"], "grid.csv").decode().strip().splitlines()
    shape_ok = len(cells) == 10 and len(grid) == 4 and all(len(r.split(",")) == 4 for r in grid)
    elapsed = time.perf_counter() - start
    report(capsys, 9, same and shape_ok and elapsed < 900,
           f"{len(cells) - 1} cell rows, {len(grid) - 1}x{len(grid[0].split(',')) - 1} grid, "
           f"rerun byte-identical: {same}, {elapsed:.1f}s")


# 10 --------------------------------------------------------------------------

def test_criterion_10_trajectory_self_consistency(capsys, tmp_path):
    start = time.perf_counter()
    windows = tr.synthetic_dt_dataset(EnvConfig(episode_length=2000.0), 200, seed=0)
    path = tmp_path / "synthetic.csv"
    tr.write_dataset(path, windows)
    rows = tr.table_rows(tr.eval_trajectories(tr.read_dataset(path), tr.dt_window_policy))
    shape_ok = [r[0] for r in rows] == ["Non-merge (lane stay)", "Merge (lane change)"]
    accs = [r[3] for r in rows]
    elapsed = time.perf_counter() - start
    report(capsys, 10, shape_ok and accs == [1.0, 1.0] and elapsed < 60,
           f"non-merge {rows[0][2]}/{rows[0][1]}, merge {rows[1][2]}/{rows[1][1]}, "
           f"{elapsed:.1f}s")
