"""Training loop, evaluation metrics, baselines and reference scores."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace, asdict
from typing import Callable, Optional

import numpy as np

from .agent import (AgentConfig, DDQNAgent, NonFiniteError, compute_action_mask, epsilon,
                    record_negative_sample, select_action)
from .dtree import rule_policy, seed_buffer
from .nn import NetworkSpec
from .replay import ALPHA, PrioritizedReplay
from .sim import N_ACTIONS, EnvConfig, ConfigError, create_env

BASELINES = ("drnet", "drnet_no_subspace", "drnet_no_init", "ddqn_plain", "rule_based", "random")


@dataclass(frozen=True)
class Variant:
    learns: bool
    masked: bool
    seeded: bool
    alpha: float
    negative_samples: bool


VARIANTS = {
    "drnet": Variant(True, True, True, ALPHA, True),
    "drnet_no_subspace": Variant(True, False, True, ALPHA, False),
    "drnet_no_init": Variant(True, True, False, ALPHA, True),
    "ddqn_plain": Variant(True, False, False, 0.0, False),
    "rule_based": Variant(False, True, False, 0.0, False),
    "random": Variant(False, True, False, 0.0, False),
}


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    buffer_size: int = 500_000
    seed_transitions: int = 512
    # H also names a batch size; kept as its own key for the
    # record, training minibatches use agent.minibatch
    batch_size: int = 512
    episodes: int = 200
    eval_episodes: int = 20
    reference_episodes: Optional[int] = None  # None: same count as episodes
    baseline: str = "drnet"
    rng_seed: int = 0
    out_dir: str = "runs"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.env, dict):
            self.env = EnvConfig.from_dict(self.env)
        if isinstance(self.agent, dict):
            self.agent = AgentConfig.from_dict(self.agent)
        if isinstance(self.network, dict):
            self.network = NetworkSpec.from_dict(self.network)
        self.validate()

    def validate(self):
        if self.baseline not in VARIANTS:
            raise ConfigError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.reference_episodes is not None and self.reference_episodes < 1:
            raise ConfigError("reference_episodes must be >= 1")
        if self.buffer_size < 1 or self.episodes < 0 or self.eval_episodes < 0:
            raise ConfigError("buffer_size must be >= 1, episode counts >= 0")
        if self.seed_transitions > self.buffer_size:
            raise ConfigError("seed_transitions exceeds buffer capacity")
        want = self.env.n_layers
        if self.network.input_shape[0] != want:
            self.network = replace(self.network, input_shape=(want,) + tuple(self.network.input_shape[1:]))
        self.env.validate()

    @property
    def n_reference(self) -> int:
        return self.reference_episodes or max(self.episodes, 1)

    @property
    def variant(self) -> Variant:
        return VARIANTS[self.baseline]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["network"]["input_shape"] = list(d["network"]["input_shape"])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("out_dir", None)
        d.pop("workers", None)
        blob = json.dumps(d, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def desk_scale(**overrides) -> RunConfig:
    """Small configuration used by the test suite and quick experiments."""
    cfg = RunConfig(
        env=EnvConfig(episode_length=2000.0),
        network=NetworkSpec(first_channels=8, channels=16),
        buffer_size=20_000,
        episodes=50,
        eval_episodes=20,
    )
    for key, value in overrides.items():
        cfg = with_value(cfg, key, value)
    return cfg


def with_value(cfg: RunConfig, key: str, value) -> RunConfig:
    """Copy of ``cfg`` with a dotted key (``agent.discount``) set."""
    head, _, rest = key.partition(".")
    if head not in RunConfig.__dataclass_fields__:
        raise ConfigError(f"unknown config key {key!r}")
    if not rest:
        return replace(cfg, **{head: value})
    sub = getattr(cfg, head)
    if not hasattr(sub, "__dataclass_fields__") or rest not in sub.__dataclass_fields__:
        raise ConfigError(f"unknown config key {key!r}")
    if isinstance(value, list):
        value = tuple(value)
    return replace(cfg, **{head: replace(sub, **{rest: value})})


# policies ------------------------------------------------------------------

def masked_random_policy(rng) -> Callable:
    def policy(env, state):
        allowed = np.flatnonzero(compute_action_mask(env.view()))
        return int(allowed[rng.integers(len(allowed))])
    return policy


def rule_based_policy(env, state):
    return rule_policy(env.view())


def greedy_policy(agent: DDQNAgent, masked: bool) -> Callable:
    rng = np.random.default_rng(0)

    def policy(env, state):
        mask = compute_action_mask(env.view(), agent.config.headway) if masked \
            else np.ones(N_ACTIONS, dtype=np.int8)
        return select_action(agent.q_values(state), mask, 0.0, rng)
    return policy


def _env_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1)[0])


def _seed_streams(rng_seed: int):
    root = np.random.SeedSequence(rng_seed)
    names = ("agent", "train_envs", "policy", "seeding", "eval_envs")
    return dict(zip(names, root.spawn(len(names))))


# episodes ------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    total_reward: float
    mean_reward: float
    mean_velocity: float
    distance: float
    collided: bool
    lane_changes: int
    masked_violations: int = 0
    lane_violations: int = 0
    score: Optional[float] = None

    def as_row(self) -> dict:
        return asdict(self)


def run_episode(env_config: EnvConfig, policy, episode: int = 0, headway: float = 2.0) -> EpisodeRecord:
    env = create_env(env_config)
    state = env.observe()
    total, vel, violations, lane_viol = 0.0, 0.0, 0, 0
    while not env.done:
        mask = compute_action_mask(env.view(), headway)
        a = policy(env, state)
        violations += int(not mask[a])
        out = env.step(a)
        lane_viol += int(out.lane_violation)
        total += out.reward
        vel += out.velocity
        state = out.next_state
    return EpisodeRecord(episode, env.t, total, total / env.t, vel / env.t, env.distance,
                         env.collided, env.lane_changes, violations, lane_viol)


def episode_configs(env_config: EnvConfig, seq: np.random.SeedSequence, n: int):
    return [replace(env_config, rng_seed=_env_seed(child)) for child in seq.spawn(n)]


# metrics --------------------------------------------------------------------

def decision_efficiency(v_mean: float, safety: float, lc_mean: float) -> float:
    if safety == 0:
        return 0.0
    if lc_mean == 0:
        return math.inf
    return v_mean * safety / lc_mean


def normalized_score(r: float, r_rule: float, r_random: float) -> float:
    if r_rule == r_random:
        raise ValueError("rule and random reference rewards coincide")
    return (r - r_random) / (r_rule - r_random)


@dataclass
class RunMetrics:
    v_mean: float
    safety_ratio: float
    lc_mean: float
    sigma: float
    episodes: list = field(default_factory=list)
    scores: list = field(default_factory=list)

    @classmethod
    def from_episodes(cls, records, scores=()):
        if not records:
            raise ValueError("need at least one episode")
        v = float(np.mean([r.mean_velocity for r in records]))
        s = float(np.mean([0.0 if r.collided else 1.0 for r in records]))
        lc = float(np.mean([r.lane_changes for r in records]))
        return cls(v, s, lc, decision_efficiency(v, s, lc), list(records), list(scores))


def evaluate(policy, env_config: EnvConfig, n_episodes: int, seed_seq, headway=2.0) -> RunMetrics:
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    records = [run_episode(cfg, policy, i, headway)
               for i, cfg in enumerate(episode_configs(env_config, seed_seq, n_episodes))]
    return RunMetrics.from_episodes(records)


_REFERENCE_CACHE: dict = {}


def reference_rewards(env_config: EnvConfig, n_episodes: int, seed: int) -> tuple:
    """(r_rule, r_random): mean per-timeslot reward of the rule-based and the
    masked uniform-random policy.

    Both are played on the first ``n_episodes`` training episodes of ``seed``,
    and the random policy draws from the same stream the ``random`` baseline
    uses, so those two baselines score exactly 1 and 0 on average when they
    run as many episodes as the reference.
    """
    key = (json.dumps(env_config.to_dict(), sort_keys=True, default=list), n_episodes, seed)
    if key not in _REFERENCE_CACHE:
        streams = _seed_streams(seed)
        cfgs = episode_configs(env_config, streams["train_envs"], n_episodes)
        rule = [run_episode(c, rule_based_policy).mean_reward for c in cfgs]
        rand_policy = masked_random_policy(np.random.default_rng(streams["policy"]))
        rand = [run_episode(c, rand_policy).mean_reward for c in cfgs]
        _REFERENCE_CACHE[key] = (float(np.mean(rule)), float(np.mean(rand)))
    return _REFERENCE_CACHE[key]


# training -------------------------------------------------------------------

@dataclass
class TrainResult:
    config: RunConfig
    records: list
    r_rule: float
    r_random: float
    agent: Optional[DDQNAgent] = None
    seeded: int = 0
    negative_samples: int = 0
    buffer_live_at_start: int = 0
    train_steps: int = 0

    @property
    def scores(self):
        return [r.score for r in self.records]


def train(cfg: RunConfig, log: Optional[Callable] = None) -> TrainResult:
    """Run the full training procedure for ``cfg.baseline``.

    Non-learning baselines just play ``cfg.episodes`` episodes so their
    score curve can be compared with the learners.
    """
    variant = cfg.variant
    streams = _seed_streams(cfg.rng_seed)
    r_rule, r_random = reference_rewards(cfg.env, cfg.n_reference, cfg.rng_seed)
    env_cfgs = episode_configs(cfg.env, streams["train_envs"], cfg.episodes)
    policy_rng = np.random.default_rng(streams["policy"])
    headway = cfg.agent.headway

    if not variant.learns:
        policy = rule_based_policy if cfg.baseline == "rule_based" else masked_random_policy(policy_rng)
        records = []
        for i, ecfg in enumerate(env_cfgs):
            rec = run_episode(ecfg, policy, i, headway)
            rec.score = normalized_score(rec.mean_reward, r_rule, r_random)
            records.append(rec)
            if log:
                log(rec)
        return TrainResult(cfg, records, r_rule, r_random)

    agent_seed = int(streams["agent"].generate_state(1)[0])
    agent = DDQNAgent(cfg.network, cfg.agent, seed=agent_seed)
    buffer = PrioritizedReplay(cfg.buffer_size, cfg.network.input_shape, alpha=variant.alpha)
    seeded = 0
    if variant.seeded:
        seeded = seed_buffer(cfg.env, buffer, cfg.seed_transitions, streams["seeding"])
    live_at_start = len(buffer)
    acfg = cfg.agent
    k = acfg.minibatch
    t = 0
    negatives = 0
    records = []
    ones = np.ones(N_ACTIONS, dtype=np.int8)
    for i, ecfg in enumerate(env_cfgs):
        env = create_env(ecfg)
        state = env.render_grid()
        total, vel, violations, lane_viol = 0.0, 0.0, 0, 0
        while not env.done:
            if t % acfg.replay_period == 0 and len(buffer) >= k:
                batch = buffer.sample(k, policy_rng)
                try:
                    delta = agent.train_step(batch.states, batch.actions, batch.rewards,
                                             batch.next_states, batch.terminals)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"{exc} at step {t}, episode {i}") from exc
                buffer.update_priorities(batch.indices, delta, batch.stamps)
            full_mask = compute_action_mask(env.view(), headway)
            mask = full_mask if variant.masked else ones
            eps = epsilon(t, acfg.epsilon_start, acfg.epsilon_decay, acfg.epsilon_min)
            q = agent.q_values(state)
            a = select_action(q, mask, eps, policy_rng)
            if variant.negative_samples:
                negatives += record_negative_sample(state, int(np.argmax(q)), mask, buffer)
            violations += int(not full_mask[a])
            out = env.step(a)
            nxt = env.render_grid()
            buffer.push(state, a, out.reward, nxt, out.terminal)
            lane_viol += int(out.lane_violation)
            total += out.reward
            vel += out.velocity
            state = nxt
            t += 1
        rec = EpisodeRecord(i, env.t, total, total / env.t, vel / env.t, env.distance,
                            env.collided, env.lane_changes, violations, lane_viol)
        rec.score = normalized_score(rec.mean_reward, r_rule, r_random)
        records.append(rec)
        if log:
            log(rec)
    return TrainResult(cfg, records, r_rule, r_random, agent, seeded, negatives,
                       live_at_start, agent.train_steps)


def policy_for(result: TrainResult, rng_seed: int = 0):
    cfg = result.config
    if cfg.baseline == "rule_based":
        return rule_based_policy
    if cfg.baseline == "random":
        return masked_random_policy(np.random.default_rng(rng_seed))
    return greedy_policy(result.agent, cfg.variant.masked)


def evaluate_run(result: TrainResult, n_episodes: Optional[int] = None) -> RunMetrics:
    cfg = result.config
    n = cfg.eval_episodes if n_episodes is None else n_episodes
    streams = _seed_streams(cfg.rng_seed)
    policy = policy_for(result, int(streams["policy"].generate_state(1)[0]))
    return evaluate(policy, cfg.env, n, streams["eval_envs"], cfg.agent.headway)


def first_episode_reaching(scores, level: float = 1.0) -> Optional[int]:
    for i, s in enumerate(scores):
        if s >= level:
            return i + 1
    return None
