"""Double DQN learner with safe action-subspace masking."""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .nn import NetworkSpec, QNetwork, network_to_dict, network_from_dict, sgd_update
from .sim import (N_ACTIONS, STAY, LEFT, RIGHT, ACCEL, DECEL, KMH, TrafficView, Env,
                  decode_state)

HEADWAY_S = 2.0


class MaskError(RuntimeError):
    pass


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class AgentConfig:
    discount: float = 0.93
    learning_rate: float = 0.0005
    tau: float = 0.001
    minibatch: int = 32
    replay_period: int = 4
    epsilon_start: float = 1.0
    epsilon_min: float = 0.001
    epsilon_decay: float = 0.93
    hard_update_period: Optional[int] = None
    headway: float = HEADWAY_S

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.epsilon_min > self.epsilon_start:
            raise ValueError("epsilon_min must not exceed epsilon_start")
        if self.minibatch < 1 or self.replay_period < 1:
            raise ValueError("minibatch and replay_period must be >= 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown agent keys: {sorted(unknown)}")
        return cls(**data)


def epsilon(t: int, eps0: float = 1.0, decay: float = 0.93, eps_min: float = 0.001) -> float:
    return max(eps0 * decay ** t, eps_min)


def compute_action_mask(view, headway: float = HEADWAY_S, d_safe: Optional[float] = None) -> np.ndarray:
    """Safety weights w_0..w_4 (1 = allowed) from ground truth around the ego."""
    if isinstance(view, Env):
        view = view.view()
    d_safe = view.d_des if d_safe is None else d_safe
    v_min, v_max = view.ego_speed_bounds
    w = np.ones(N_ACTIONS, dtype=np.int8)
    w[LEFT] = view.lane_clear(view.ego_lane - 1, d_safe)
    w[RIGHT] = view.lane_clear(view.ego_lane + 1, d_safe)
    gap = view.leader_gap()
    if view.ego_v >= v_max or (gap is not None and gap < headway * view.ego_v * KMH):
        w[ACCEL] = 0
    if view.ego_v <= v_min:
        w[DECEL] = 0
    w[STAY] = 1
    return w


def masked_argmax(q, mask) -> int:
    q = np.where(np.asarray(mask) > 0, q, -np.inf)
    return int(np.argmax(q))


def select_action(q, mask, eps, rng) -> int:
    """Epsilon-greedy restricted to the allowed actions; ties go to the lowest index."""
    allowed = np.flatnonzero(np.asarray(mask) > 0)
    if not len(allowed):
        raise MaskError("no safe action available")
    if rng.random() < eps:
        return int(allowed[rng.integers(len(allowed))])
    return masked_argmax(q, mask)


def soft_update(online: QNetwork, target: QNetwork, tau: float) -> QNetwork:
    if online.spec != target.spec:
        raise ValueError("online and target networks differ in spec")
    for lo, lt in zip(online.layers, target.layers):
        lt.W *= (1.0 - tau)
        lt.W += tau * lo.W
        lt.b *= (1.0 - tau)
        lt.b += tau * lo.b
    return target


def _as_input(states):
    states = np.asarray(states)
    return decode_state(states) if states.dtype == np.uint8 else states.astype(np.float64)


def ddqn_targets(rewards, next_states, terminals, online, target, gamma):
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)); just r at terminals."""
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    y = rewards.copy()
    live = ~terminals
    if live.any():
        nxt = _as_input(next_states)[live]
        a_star = np.argmax(online.forward(nxt), axis=1)
        q_t = target.forward(nxt)
        y[live] += gamma * q_t[np.arange(len(a_star)), a_star]
    return y


def dqn_targets(rewards, next_states, terminals, target, gamma):
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    y = rewards.copy()
    live = ~terminals
    if live.any():
        y[live] += gamma * target.forward(_as_input(next_states)[live]).max(axis=1)
    return y


class DDQNAgent:
    def __init__(self, spec: NetworkSpec, config: AgentConfig, seed: int = 0):
        self.spec = spec
        self.config = config
        self.seed = seed
        self.online = QNetwork(spec, seed=seed)
        # target starts as a copy; an independent random target would keep
        # most of its noise for thousands of soft updates at tau = 0.001
        self.target = self.online.copy()
        self.train_steps = 0

    def q_values(self, state) -> np.ndarray:
        x = _as_input(state)
        if x.shape[-3:] != tuple(self.spec.input_shape):
            raise ValueError(f"state shape {x.shape} does not match network input {self.spec.input_shape}")
        return self.online.forward(x)

    def ddqn_target(self, reward, next_state, terminal) -> float:
        return float(ddqn_targets([reward], np.asarray(next_state)[None], [terminal],
                                  self.online, self.target, self.config.discount)[0])

    def td_errors(self, states, actions, rewards, next_states, terminals) -> np.ndarray:
        y = ddqn_targets(rewards, next_states, terminals, self.online, self.target,
                         self.config.discount)
        q = self.online.forward(_as_input(states))
        return y - q[np.arange(len(actions)), np.asarray(actions)]

    def td_error(self, state, action, reward, next_state, terminal) -> float:
        return float(self.td_errors(np.asarray(state)[None], [action], [reward],
                                    np.asarray(next_state)[None], [terminal])[0])

    def train_step(self, states, actions, rewards, next_states, terminals, eta=None) -> np.ndarray:
        """One accumulated update: theta += eta * sum_m delta_m * grad Q(s_m, a_m).

        Returns the per-item TD errors measured before the update.
        """
        eta = self.config.learning_rate if eta is None else eta
        y = ddqn_targets(rewards, next_states, terminals, self.online, self.target,
                         self.config.discount)
        actions = np.asarray(actions)
        q = self.online.forward(_as_input(states))
        delta = y - q[np.arange(len(actions)), actions]
        if not np.all(np.isfinite(delta)):
            raise NonFiniteError("non-finite TD error")
        out_grad = np.zeros_like(q)
        out_grad[np.arange(len(actions)), actions] = delta
        grads = self.online.backward(out_grad)
        if not all(np.all(np.isfinite(g)) for layer in grads for g in layer):
            raise NonFiniteError("non-finite gradient")
        sgd_update(self.online.params(), grads, eta)
        self.train_steps += 1
        cfg = self.config
        if cfg.hard_update_period:
            if self.train_steps % cfg.hard_update_period == 0:
                self.target.load_params(self.online)
        else:
            soft_update(self.online, self.target, cfg.tau)
        return delta

    def act(self, state, mask, eps, rng):
        """Returns (action, unmasked greedy action)."""
        q = self.q_values(state)
        return select_action(q, mask, eps, rng), int(np.argmax(q))

    # checkpoints

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "online.json").write_text(json.dumps(network_to_dict(self.online, self.seed)))
        (d / "target.json").write_text(json.dumps(network_to_dict(self.target, self.seed)))
        (d / "agent.json").write_text(json.dumps(
            {"config": self.config.to_dict(), "seed": self.seed,
             "train_steps": self.train_steps}, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "DDQNAgent":
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        online = network_from_dict(json.loads((d / "online.json").read_text()))
        target = network_from_dict(json.loads((d / "target.json").read_text()))
        agent = cls(online.spec, AgentConfig.from_dict(meta["config"]), seed=meta["seed"])
        agent.online, agent.target = online, target
        agent.train_steps = meta.get("train_steps", 0)
        return agent


def record_negative_sample(state, unmasked_action: int, mask, buffer) -> bool:
    """Store (s, a, -1, s, not terminal) when the raw greedy action is masked out."""
    if mask[unmasked_action]:
        return False
    buffer.push(state, unmasked_action, -1.0, state, False)
    return True
