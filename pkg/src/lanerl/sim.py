"""Discrete-time multi-lane highway with an ego-centric occupancy grid.

The road is a ring of ``road_length`` meters; the ego drives until it has
covered ``episode_length`` meters or collides. One timeslot is one second and
speeds are km/h, so a vehicle advances ``v / 3.6`` meters per step.

Lane 0 is the leftmost lane. Longitudinal positions are rear bumpers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

N_ACTIONS = 5
STAY, LEFT, RIGHT, ACCEL, DECEL = range(N_ACTIONS)
ACTION_NAMES = ("stay", "left", "right", "accelerate", "decelerate")

VEHICLE_LENGTH = 6.0
VEHICLE_WIDTH = 3.0
KMH = 1.0 / 3.6  # km/h -> m per timeslot

GRID_ROWS = 30
CELLS_PER_LANE = 5
WINDOW_LANES = 3
GRID_COLS = CELLS_PER_LANE * WINDOW_LANES
FRONT_CELLS = 20
REAR_CELLS = 10

STYLES = ("cautious", "normal", "aggressive")
STYLE_CODE = {"cautious": 1, "normal": 2, "aggressive": 3}
STYLE_LETTER = {"cautious": "c", "normal": "n", "aggressive": "a"}

# participant behavior per style: desired bumper gap (m), lane-change
# probability per timeslot, cruise-speed offset (km/h)
STYLE_GAP = {"aggressive": 8.0, "normal": 15.0, "cautious": 25.0}
STYLE_LC_PROB = {"aggressive": 0.02, "normal": 0.005, "cautious": 0.0}
STYLE_SPEED_SHIFT = {"aggressive": 8.0, "normal": 0.0, "cautious": -8.0}

# ego desired lane-change distance per driving profile
EGO_D_DES = {"aggressive": 10.0, "normal": 18.0, "conservative": 25.0}

P_ACCEL = 5.0  # km/h per timeslot
P_BRAKE = 10.0
P_MIN_CLEARANCE = 1.0
SPAWN_SLOT = 10.0


class ConfigError(ValueError):
    pass


class EpisodeOver(RuntimeError):
    pass


@dataclass
class EnvConfig:
    lanes: int = 3
    lane_densities: tuple = (0.1, 0.3, 0.5)
    participant_count: Optional[int] = None
    episode_length: float = 8193.0
    sensing_range: float = 1.0
    ego_speed_bounds: tuple = (10.0, 80.0)
    participant_speed_bounds: tuple = (20.0, 60.0)
    v_des: float = 75.0
    beta_freq: float = 0.7
    ego_style: str = "normal"
    d_des: Optional[float] = None
    lambda_c: float = 10.0
    lambda_d: Optional[float] = None
    lambda_e: Optional[float] = None
    speed_step: float = 5.0
    road_length: Optional[float] = None
    density_unit: float = 30.0
    style_mix: tuple = (0.3, 0.4, 0.3)  # cautious, normal, aggressive
    style_layer: bool = False
    max_steps: Optional[int] = None
    record_history: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        self.lane_densities = tuple(float(d) for d in self.lane_densities)
        self.ego_speed_bounds = tuple(float(v) for v in self.ego_speed_bounds)
        self.participant_speed_bounds = tuple(float(v) for v in self.participant_speed_bounds)
        self.style_mix = tuple(float(p) for p in self.style_mix)
        self.validate()

    def validate(self):
        if self.lanes < 1:
            raise ConfigError("lanes must be >= 1")
        if len(self.lane_densities) != self.lanes:
            raise ConfigError("need one density per lane")
        if any(not 0.0 <= d <= 1.0 for d in self.lane_densities):
            raise ConfigError("lane densities must lie in [0, 1]")
        v_min, v_max = self.ego_speed_bounds
        if not v_min < self.v_des <= v_max:
            raise ConfigError("need v_min < v_des <= v_max")
        p_min, p_max = self.participant_speed_bounds
        if not 0 < p_min <= p_max:
            raise ConfigError("bad participant speed bounds")
        if not 0.0 < self.beta_freq <= 1.0:
            raise ConfigError("beta_freq must lie in (0, 1]")
        if self.ego_style not in EGO_D_DES:
            raise ConfigError(f"unknown ego style {self.ego_style!r}")
        for name in ("lambda_c", "lambda_d", "lambda_e"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigError(f"{name} must be > 0")
        if self.sensing_range <= 0 or self.episode_length <= 0 or self.speed_step <= 0:
            raise ConfigError("sensing_range, episode_length and speed_step must be > 0")
        if self.participant_count is not None and self.participant_count < 0:
            raise ConfigError("participant_count must be >= 0")
        if len(self.style_mix) != 3 or abs(sum(self.style_mix) - 1.0) > 1e-9:
            raise ConfigError("style_mix must be three probabilities summing to 1")

    # derived quantities

    @property
    def desired_gap(self) -> float:
        return self.d_des if self.d_des is not None else EGO_D_DES[self.ego_style]

    @property
    def ring_length(self) -> float:
        return self.road_length if self.road_length is not None else max(self.episode_length, 400.0)

    @property
    def max_leader_gap(self) -> float:
        return FRONT_CELLS * self.sensing_range - VEHICLE_LENGTH

    @property
    def distance_weight(self) -> float:
        if self.lambda_d is not None:
            return self.lambda_d
        d = self.desired_gap
        return 1.0 / max(d, self.max_leader_gap - d)

    @property
    def efficiency_weight(self) -> float:
        if self.lambda_e is not None:
            return self.lambda_e
        v_min, v_max = self.ego_speed_bounds
        return 1.0 / max(self.v_des - v_min, v_max - self.v_des)

    @property
    def step_budget(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return int(math.ceil(self.episode_length / (self.ego_speed_bounds[0] * KMH))) + 1

    @property
    def n_layers(self) -> int:
        return 4 if self.style_layer else 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown env keys: {sorted(unknown)}")
        return cls(**data)


# reward terms

def reward_collision(c_t: int, lambda_c: float) -> float:
    return -lambda_c * c_t


def reward_distance(d: float, d_des: float, l_t: int, lambda_d: float) -> float:
    if not l_t:
        return 0.0
    return -lambda_d * abs(d - d_des) * l_t


def reward_efficiency(v_t: float, v_des: float, lambda_e: float,
                      consecutive_lane_change: bool, beta_t: float) -> float:
    beta = beta_t if consecutive_lane_change else 1.0
    return -lambda_e * abs(v_t - v_des) / beta


def reward_total(r_c: float, r_d: float, r_e: float) -> float:
    return r_c + r_d + r_e


@dataclass
class VehicleState:
    id: int
    lane: int
    x: float
    v: float
    style: Optional[str] = None
    is_ego: bool = False
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH


@dataclass
class TrafficView:
    """Snapshot of ground truth around the ego, enough for masks and rules.

    ``road_length`` is None for open (non-ring) coordinates, e.g. data read
    back from a trajectory file.
    """
    lanes: int
    ego_lane: int
    ego_x: float
    ego_v: float
    lane: np.ndarray
    x: np.ndarray
    v: np.ndarray
    ego_speed_bounds: tuple
    sensing_range: float
    d_des: float
    road_length: Optional[float] = None
    style: Optional[Sequence[str]] = None
    v_des: Optional[float] = None

    def rel(self, x=None) -> np.ndarray:
        """Signed rear-to-rear offsets of participants from the ego."""
        d = (self.x if x is None else x) - self.ego_x
        if self.road_length is not None:
            c = self.road_length
            d = np.mod(d + c / 2.0, c) - c / 2.0
        return d

    def leader_gap(self, lane: Optional[int] = None) -> Optional[float]:
        """Bumper gap to the nearest vehicle ahead in ``lane`` (None if none)."""
        lane = self.ego_lane if lane is None else lane
        rel = self.rel()
        sel = (self.lane == lane) & (rel >= 0.0)
        if not sel.any():
            return None
        return float(rel[sel].min()) - VEHICLE_LENGTH

    def leader_sensed(self, lane: Optional[int] = None) -> Optional[float]:
        """Leader gap if the leader lies inside the forward sensing window."""
        gap = self.leader_gap(lane)
        if gap is None or gap + VEHICLE_LENGTH > FRONT_CELLS * self.sensing_range:
            return None
        return gap

    def lane_clear(self, lane: int, margin: float) -> bool:
        """True when no vehicle in ``lane`` comes within ``margin`` meters of the ego."""
        if lane < 0 or lane >= self.lanes:
            return False
        rel = self.rel()
        sel = self.lane == lane
        near = (rel[sel] > -VEHICLE_LENGTH - margin) & (rel[sel] < VEHICLE_LENGTH + margin)
        return not near.any()


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    reward_parts: tuple
    collision: int
    lane_change: int
    terminal: bool
    truncated: bool
    distance_traveled: float
    velocity: float
    lane_violation: bool = False
    action: int = STAY


def _block_rows(rel: float, cell: float, n: int):
    start = math.floor(rel / cell) + REAR_CELLS
    if start == GRID_ROWS and rel == FRONT_CELLS * cell:
        # the forward edge itself is inside the window
        start = GRID_ROWS - 1
    lo, hi = max(start, 0), min(start + n, GRID_ROWS)
    return lo, hi


def vehicle_cells(sensing_range: float) -> int:
    return max(1, int(round(VEHICLE_LENGTH / sensing_range)))


def render_frame(view: TrafficView, style_labels=None) -> np.ndarray:
    """Grid for one timeslot: row 0 is the forward edge, columns left to right.

    Returns a (2, 30, 15) array: occupancy (0/1) and the style code layer
    (0 empty, 1 cautious, 2 normal, 3 aggressive).
    """
    grid = np.zeros((2, GRID_ROWS, GRID_COLS), dtype=np.uint8)
    cell = view.sensing_range
    n = vehicle_cells(cell)
    ego_lo, ego_hi = _block_rows(0.0, cell, n)
    col0 = CELLS_PER_LANE + 1
    grid[0, GRID_ROWS - ego_hi:GRID_ROWS - ego_lo, col0:col0 + 3] = 1
    rel = view.rel()
    for i in range(len(rel)):
        offset = int(view.lane[i]) - view.ego_lane
        if abs(offset) > 1:
            continue
        lo, hi = _block_rows(float(rel[i]), cell, n)
        if lo >= hi:
            continue
        c = CELLS_PER_LANE * (offset + 1) + 1
        grid[0, GRID_ROWS - hi:GRID_ROWS - lo, c:c + 3] = 1
        if style_labels is not None:
            grid[1, GRID_ROWS - hi:GRID_ROWS - lo, c:c + 3] = STYLE_CODE[style_labels[i]]
    return grid


def dump_grid(state: np.ndarray, layer: int = -1) -> str:
    """Text rendering of one layer; the style layer (index 3) uses a/n/c."""
    codes = np.asarray(state)
    if layer < 0:
        layer = min(2, codes.shape[0] - 1) if layer == -1 else codes.shape[0] + layer
    g = codes[layer]
    ego = ego_mask()
    lines = []
    if layer == 3:
        letters = {0: ".", 1: "c", 2: "n", 3: "a"}
        for r in range(GRID_ROWS):
            lines.append("".join(letters[int(round(g[r, c] * 4))] for c in range(GRID_COLS)))
    else:
        for r in range(GRID_ROWS):
            lines.append("".join("E" if ego[r, c] else ("#" if g[r, c] else ".")
                                 for c in range(GRID_COLS)))
    return "\n".join(lines)


def ego_mask(sensing_range: float = 1.0) -> np.ndarray:
    m = np.zeros((GRID_ROWS, GRID_COLS), dtype=bool)
    lo, hi = _block_rows(0.0, sensing_range, vehicle_cells(sensing_range))
    m[GRID_ROWS - hi:GRID_ROWS - lo, CELLS_PER_LANE + 1:CELLS_PER_LANE + 4] = True
    return m


def stack_state(frames, style_frame=None) -> np.ndarray:
    """Stack three occupancy frames (oldest first) and an optional style code
    frame into the uint8 code tensor stored in the replay buffer."""
    layers = [f[0] for f in frames]
    if style_frame is not None:
        layers.append(style_frame[1])
    return np.stack(layers)


def decode_state(codes: np.ndarray) -> np.ndarray:
    """uint8 code tensor -> float64 network input (style codes scaled by 1/4)."""
    x = codes.astype(np.float64)
    if x.shape[-3] == 4:
        x[..., 3, :, :] *= 0.25
    return x


class Env:
    """One highway episode. Create with :func:`create_env`."""

    def __init__(self, config: EnvConfig, style_classifier=None):
        config.validate()
        self.config = config
        self.style_classifier = style_classifier
        self.rng = np.random.default_rng(config.rng_seed)
        self._spawn()

    # setup

    def _lane_counts(self) -> list:
        cfg = self.config
        dens = np.asarray(cfg.lane_densities)
        if cfg.participant_count is None:
            return [int(round(d * cfg.ring_length / cfg.density_unit)) for d in dens]
        total = cfg.participant_count
        weights = dens if dens.sum() > 0 else np.ones(cfg.lanes)
        share = weights / weights.sum() * total
        counts = np.floor(share).astype(int)
        rest = total - counts.sum()
        order = np.argsort(-(share - counts), kind="stable")
        counts[order[:rest]] += 1
        return [int(c) for c in counts]

    def _spawn(self):
        cfg = self.config
        rng = self.rng
        ring = cfg.ring_length
        self.t = 0
        self.distance = 0.0
        self.done = False
        self.collided = False
        self.lane_changes = 0
        self._last_lane_change = False
        self.ego_lane = int(rng.integers(cfg.lanes))
        self.ego_x = 0.0
        self.ego_v = cfg.ego_speed_bounds[0]

        counts = self._lane_counts()
        n_slots = int(ring // SPAWN_SLOT)
        slot_pos = np.arange(n_slots) * SPAWN_SLOT
        rel = np.mod(slot_pos + ring / 2.0, ring) - ring / 2.0
        lanes, xs = [], []
        for lane, n in enumerate(counts):
            if lane == self.ego_lane:
                ok = (rel < -30.0) | (rel > 40.0)
            else:
                ok = (rel < -VEHICLE_LENGTH - 4.0) | (rel > VEHICLE_LENGTH + 4.0)
            free = np.flatnonzero(ok)
            if n > len(free):
                raise ConfigError(
                    f"cannot place {n} participants in lane {lane} without overlap")
            chosen = np.sort(rng.choice(free, size=n, replace=False)) if n else np.array([], int)
            jitter = rng.uniform(0.0, SPAWN_SLOT - VEHICLE_LENGTH - 2.0, size=n)
            lanes.extend([lane] * n)
            xs.extend((slot_pos[chosen] + jitter).tolist())
        n = len(xs)
        self.p_lane = np.asarray(lanes, dtype=np.int64)
        self.p_x = np.asarray(xs, dtype=np.float64)
        style_idx = rng.choice(3, size=n, p=cfg.style_mix)
        self.p_style = [STYLES[i] for i in style_idx]
        self.p_gap = np.array([STYLE_GAP[s] for s in self.p_style])
        self.p_lc = np.array([STYLE_LC_PROB[s] for s in self.p_style])
        p_min, p_max = cfg.participant_speed_bounds
        # left lanes run faster: lane bands shift from the top toward the bottom of the range
        span = p_max - p_min
        frac = self.p_lane / max(cfg.lanes - 1, 1) if cfg.lanes > 1 else np.zeros(n)
        center = p_max - span * (0.2 + 0.6 * frac)
        shift = np.array([STYLE_SPEED_SHIFT[s] for s in self.p_style])
        target = center + shift + rng.uniform(-0.1 * span, 0.1 * span, size=n)
        self.p_target = np.clip(target, p_min, p_max)
        self.p_v = self.p_target.copy()
        self.p_odo = self.p_x.copy()  # unwrapped odometer, for trajectories
        self.p_ids = np.arange(1, n + 1)

        self.history = []
        if cfg.record_history:
            self._record()
        frame = self._frame()
        self._frames = [frame, frame, frame]

    # views and rendering

    def view(self) -> TrafficView:
        cfg = self.config
        return TrafficView(
            lanes=cfg.lanes, ego_lane=self.ego_lane, ego_x=self.ego_x, ego_v=self.ego_v,
            lane=self.p_lane, x=self.p_x, v=self.p_v,
            ego_speed_bounds=cfg.ego_speed_bounds, sensing_range=cfg.sensing_range,
            d_des=cfg.desired_gap, road_length=cfg.ring_length, style=self.p_style,
            v_des=cfg.v_des)

    def vehicles(self) -> list:
        out = [VehicleState(0, self.ego_lane, self.ego_x, self.ego_v, is_ego=True)]
        for i in range(len(self.p_x)):
            out.append(VehicleState(int(self.p_ids[i]), int(self.p_lane[i]), float(self.p_x[i]),
                                    float(self.p_v[i]), style=self.p_style[i]))
        return out

    def style_labels(self) -> Optional[list]:
        if not self.config.style_layer:
            return None
        if self.style_classifier is None:
            return self.p_style
        return self.style_classifier(self)

    def _frame(self) -> np.ndarray:
        return render_frame(self.view(), self.style_labels())

    def render_grid(self) -> np.ndarray:
        """uint8 code tensor (3 or 4, 30, 15) for layers t-2, t-1, t (+ style)."""
        style = self._frames[-1] if self.config.style_layer else None
        return stack_state(self._frames, style)

    def observe(self) -> np.ndarray:
        return decode_state(self.render_grid())

    # dynamics

    def _record(self):
        mean_v = float(self.p_v.mean()) if len(self.p_v) else 0.0
        gaps = self._participant_gaps()
        self.history.append((self.p_lane.copy(), self.p_odo.copy(), self.p_v.copy(), gaps, mean_v))

    def _participant_gaps(self) -> np.ndarray:
        """Bumper gap from each participant to whoever is ahead in its lane."""
        ring = self.config.ring_length
        gaps = np.full(len(self.p_x), np.inf)
        for lane in range(self.config.lanes):
            idx = np.flatnonzero(self.p_lane == lane)
            xs = self.p_x[idx]
            if lane == self.ego_lane:
                xs = np.append(xs, self.ego_x)
            if len(xs) < 2:
                continue
            order = np.argsort(xs, kind="stable")
            ahead = np.mod(np.roll(xs[order], -1) - xs[order], ring)
            fwd = np.empty(len(xs))
            fwd[order] = ahead
            gaps[idx] = fwd[:len(idx)] - VEHICLE_LENGTH
        return gaps

    def _lane_clear_for(self, i: int, lane: int) -> bool:
        if lane < 0 or lane >= self.config.lanes:
            return False
        ring = self.config.ring_length
        margin = self.p_gap[i]
        xs = self.p_x[(self.p_lane == lane)]
        if lane == self.ego_lane:
            xs = np.append(xs, self.ego_x)
        if not len(xs):
            return True
        rel = np.mod(xs - self.p_x[i] + ring / 2.0, ring) - ring / 2.0
        return not ((rel > -VEHICLE_LENGTH - margin) & (rel < VEHICLE_LENGTH + margin)).any()

    def _advance_participants(self):
        cfg = self.config
        ring = cfg.ring_length
        n = len(self.p_x)
        if n == 0:
            return
        u = self.rng.random(n)
        side = self.rng.random(n)
        for i in range(n):
            if u[i] >= self.p_lc[i]:
                continue
            options = [lane for lane in (self.p_lane[i] - 1, self.p_lane[i] + 1)
                       if 0 <= lane < cfg.lanes]
            target = options[0] if len(options) == 1 or side[i] < 0.5 else options[1]
            if self._lane_clear_for(i, target):
                self.p_lane[i] = target

        p_min = cfg.participant_speed_bounds[0]
        new_x = self.p_x.copy()
        for lane in range(cfg.lanes):
            idx = np.flatnonzero(self.p_lane == lane)
            if not len(idx):
                continue
            order = idx[np.argsort(self.p_x[idx], kind="stable")][::-1]  # front first
            if lane == self.ego_lane:
                # start with the follower right behind the ego, which has already moved
                behind = np.mod(self.ego_x - self.p_x[order], ring)
                start = int(np.argmin(behind))
                order = np.roll(order, -start)
                lead_x, lead_v = self.ego_x, self.ego_v
            else:
                if len(order) == 1:
                    lead_x, lead_v = None, None
                else:
                    gaps = np.mod(np.roll(self.p_x[order], 1) - self.p_x[order], ring)
                    start = int(np.argmax(gaps))
                    order = np.roll(order, -start)
                    # leader of the first follower has not moved yet: its old
                    # position is a lower bound on where it will be
                    lead_x, lead_v = self.p_x[order[-1]], self.p_v[order[-1]]
            for i in order:
                v = self.p_v[i]
                tgt = self.p_target[i]
                if lead_x is None:
                    gap = np.inf
                else:
                    gap = np.mod(lead_x - self.p_x[i], ring) - VEHICLE_LENGTH
                if gap - v * KMH >= self.p_gap[i]:
                    v = min(v + P_ACCEL, tgt) if v < tgt else max(v - P_ACCEL, tgt)
                else:
                    # too close: match a slower leader, and shed at least one
                    # step so the style gap reopens behind an equal-speed one
                    v = max(v - P_BRAKE, min(v, lead_v) - P_ACCEL, min(p_min, v))
                if gap < np.inf:
                    v = min(v, max((gap - P_MIN_CLEARANCE) / KMH, 0.0))
                self.p_v[i] = v
                new_x[i] = np.mod(self.p_x[i] + v * KMH, ring)
                self.p_odo[i] += v * KMH
                lead_x, lead_v = new_x[i], v
        self.p_x = new_x

    def step(self, action: int) -> StepOutcome:
        if self.done:
            raise EpisodeOver("step() called on a finished episode")
        action = int(action)
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"unknown action {action}")
        cfg = self.config
        ring = cfg.ring_length
        v_min, v_max = cfg.ego_speed_bounds
        violation = False
        l_t = 0
        if action == LEFT or action == RIGHT:
            target = self.ego_lane + (-1 if action == LEFT else 1)
            if 0 <= target < cfg.lanes:
                self.ego_lane = target
                l_t = 1
            else:
                violation = True
        elif action == ACCEL:
            self.ego_v = min(self.ego_v + cfg.speed_step, v_max)
        elif action == DECEL:
            self.ego_v = max(self.ego_v - cfg.speed_step, v_min)

        consecutive = bool(l_t and self._last_lane_change)
        self._last_lane_change = bool(l_t)
        self.lane_changes += l_t
        d = cfg.desired_gap
        if l_t:
            gap = self.view().leader_sensed()
            if gap is not None:
                d = min(max(gap, 0.0), cfg.max_leader_gap)

        x0_e = self.ego_x
        x0_p = self.p_x.copy()
        step_m = self.ego_v * KMH
        self.ego_x = float(np.mod(self.ego_x + step_m, ring))
        self.distance += step_m
        self._advance_participants()

        c_t = int(self._collided(x0_e, x0_p))
        self.t += 1
        finished = self.distance >= cfg.episode_length
        truncated = (not c_t and not finished and self.t >= cfg.step_budget)
        terminal = bool(c_t or finished)
        self.done = terminal or truncated
        self.collided = bool(c_t)

        r_c = reward_collision(c_t, cfg.lambda_c)
        r_d = reward_distance(d, cfg.desired_gap, l_t, cfg.distance_weight)
        r_e = reward_efficiency(self.ego_v, cfg.v_des, cfg.efficiency_weight,
                                consecutive, cfg.beta_freq)
        r = reward_total(r_c, r_d, r_e)

        if cfg.record_history:
            self._record()
        self._frames = self._frames[1:] + [self._frame()]
        return StepOutcome(
            next_state=self.observe(), reward=r, reward_parts=(r_c, r_d, r_e),
            collision=c_t, lane_change=l_t, terminal=terminal, truncated=truncated,
            distance_traveled=self.distance, velocity=self.ego_v,
            lane_violation=violation, action=action)

    def _collided(self, x0_e: float, x0_p: np.ndarray) -> bool:
        ring = self.config.ring_length
        sel = self.p_lane == self.ego_lane
        if not sel.any():
            return False
        half = ring / 2.0
        rel0 = np.mod(x0_p[sel] - x0_e + half, ring) - half
        rel1 = np.mod(self.p_x[sel] - self.ego_x + half, ring) - half
        overlap = (np.abs(rel0) < VEHICLE_LENGTH) | (np.abs(rel1) < VEHICLE_LENGTH)
        # swept check: ordering flipped within one timeslot
        near = np.abs(rel0) < 4.0 * FRONT_CELLS
        passed = near & (((rel0 >= VEHICLE_LENGTH) & (rel1 <= -VEHICLE_LENGTH)) |
                         ((rel0 <= -VEHICLE_LENGTH) & (rel1 >= VEHICLE_LENGTH)))
        return bool((overlap | passed).any())


def create_env(config: EnvConfig, style_classifier=None) -> Env:
    return Env(config, style_classifier=style_classifier)
