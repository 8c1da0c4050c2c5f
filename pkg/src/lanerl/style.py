"""Driving-style identification: behavioral features and a one-vs-rest RBF SVM."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .sim import STYLES, EnvConfig, create_env

CLASSES = ("aggressive", "normal", "cautious")
MIN_WINDOW = 20
GAP_CAP = 50.0  # beyond any style gap plus one second of travel: free road
KKT_TOL = 1e-3
FEATURE_NAMES = ("rel_speed", "min_gap", "lc_freq", "brake_rate")


class StyleFeatures(NamedTuple):
    rel_speed: float
    min_gap: float
    lc_freq: float
    brake_rate: float


def rbf_kernel(x, y, sigma: float = 1.0):
    """exp(-|x - y|^2 / (2 sigma^2)). Either argument may be a 2-D batch of rows."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.ndim == 1 and y.ndim == 1:
        return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * sigma ** 2)))
    xa, ya = np.atleast_2d(x), np.atleast_2d(y)
    sq = (xa ** 2).sum(1)[:, None] + (ya ** 2).sum(1)[None, :] - 2.0 * xa @ ya.T
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma ** 2))


# dual solver ----------------------------------------------------------------

def solve_dual(K, y, C: float = 1.0, tol: float = KKT_TOL, max_iter: int = 100_000):
    """Pairwise (SMO) solver for min 1/2 a'Qa - sum(a), 0 <= a <= C, y'a = 0,
    with Q = yy' * K. Working pairs use second-order selection. Returns
    (alpha, b, kkt_gap)."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    alpha = np.zeros(n)
    grad = -np.ones(n)
    tau = 1e-12
    gap = np.inf
    for _ in range(max_iter):
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * grad
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_up = score[i]
        m_low = score[low].min()
        gap = m_up - m_low
        if gap < tol:
            break
        # pick j among low violators maximizing the second-order decrease
        cand = low & (score < m_up)
        b_ij = m_up - score
        a_ij = K[i, i] + np.diag(K) - 2.0 * K[i]
        a_ij = np.where(a_ij > 0, a_ij, tau)
        obj = np.where(cand, -(b_ij ** 2) / a_ij, np.inf)
        j = int(np.argmin(obj))
        a = a_ij[j]
        yi, yj = y[i], y[j]
        old_i, old_j = alpha[i], alpha[j]
        # move along y_i*d_i = -y_j*d_j
        step = b_ij[j] / a
        new_i = old_i + yi * step
        new_j = old_j - yj * step
        s = yi * old_i + yj * old_j
        # clip to the box while keeping the equality constraint
        new_i = min(max(new_i, 0.0), C)
        new_j = yj * (s - yi * new_i)
        if new_j < 0.0 or new_j > C:
            new_j = min(max(new_j, 0.0), C)
            new_i = yi * (s - yj * new_j)
        d_i, d_j = new_i - old_i, new_j - old_j
        alpha[i], alpha[j] = new_i, new_j
        grad += Q[:, i] * d_i + Q[:, j] * d_j
    b = _bias(alpha, y, grad, C)
    return alpha, b, float(gap)


def _bias(alpha, y, grad, C):
    score = -y * grad
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        return float(score[free].mean())
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    hi = score[low].min() if low.any() else score.max()
    lo = score[up].max() if up.any() else score.min()
    return float((hi + lo) / 2.0)


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    labels: np.ndarray
    alpha: np.ndarray
    b: float
    sigma: float
    C: float
    kkt_gap: float = 0.0

    def decision(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not len(self.alpha):
            return np.full(len(X), self.b)
        K = rbf_kernel(X, self.support_vectors, self.sigma)
        return K @ (self.alpha * self.labels) + self.b

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)

    def to_dict(self):
        return {"support_vectors": self.support_vectors.tolist(), "labels": self.labels.tolist(),
                "alpha": self.alpha.tolist(), "b": self.b, "sigma": self.sigma, "C": self.C,
                "kkt_gap": self.kkt_gap}

    @classmethod
    def from_dict(cls, d):
        sv = np.asarray(d["support_vectors"], dtype=np.float64).reshape(len(d["alpha"]), -1)
        return cls(sv, np.asarray(d["labels"], dtype=np.float64),
                   np.asarray(d["alpha"], dtype=np.float64), float(d["b"]),
                   float(d["sigma"]), float(d["C"]), float(d.get("kkt_gap", 0.0)))


def train_svm(X, y, C: float = 1.0, sigma: float = 1.0, tol: float = KKT_TOL) -> SvmModel:
    """Binary RBF SVM on labels in {-1, +1}; only support vectors are kept."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("binary labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("need both classes to train")
    alpha, b, gap = solve_dual(rbf_kernel(X, X, sigma), y, C, tol)
    sv = alpha > 1e-10
    return SvmModel(X[sv].copy(), y[sv].copy(), alpha[sv].copy(), b, sigma, C, gap)


@dataclass
class StyleClassifier:
    """One-vs-rest SVMs over standardized features."""
    models: dict
    mean: np.ndarray
    std: np.ndarray
    sigma: float = 1.0
    C: float = 1.0

    def standardize(self, X):
        return (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.mean) / self.std

    def decision_values(self, X) -> np.ndarray:
        Z = self.standardize(X)
        return np.column_stack([self.models[c].decision(Z) for c in CLASSES])

    def classify(self, features) -> str:
        return self.classify_many([features])[0]

    def classify_many(self, X) -> list:
        return [pick_class(row) for row in self.decision_values(X)]

    def accuracy(self, X, labels) -> float:
        pred = self.classify_many(X)
        return float(np.mean([p == t for p, t in zip(pred, labels)]))

    def to_dict(self):
        return {"classes": list(CLASSES), "sigma": self.sigma, "C": self.C,
                "mean": self.mean.tolist(), "std": self.std.tolist(),
                "features": list(FEATURE_NAMES),
                "models": {c: m.to_dict() for c, m in self.models.items()}}

    @classmethod
    def from_dict(cls, d):
        if tuple(d["classes"]) != CLASSES:
            raise ValueError(f"unexpected class list {d['classes']}")
        return cls({c: SvmModel.from_dict(d["models"][c]) for c in CLASSES},
                   np.asarray(d["mean"]), np.asarray(d["std"]), float(d["sigma"]), float(d["C"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def pick_class(values) -> str:
    """Largest decision value wins; exact ties go to ``normal`` when it is tied."""
    values = np.asarray(values)
    best = values.max()
    tied = [c for c, v in zip(CLASSES, values) if v == best]
    return "normal" if "normal" in tied else tied[0]


def train_classifier(X, labels, C: float = 1.0, sigma: float = 1.0, tol: float = KKT_TOL) -> StyleClassifier:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = list(labels)
    present = set(labels)
    if len(present) < 2:
        raise ValueError("need at least two style classes")
    if present - set(CLASSES):
        raise ValueError(f"unknown labels {sorted(present - set(CLASSES))}")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std
    models = {}
    for c in CLASSES:
        y = np.array([1.0 if lab == c else -1.0 for lab in labels])
        if c not in present:
            # class never seen: constant negative decision
            models[c] = SvmModel(np.zeros((0, X.shape[1])), np.zeros(0), np.zeros(0), -1.0, sigma, C)
        else:
            models[c] = train_svm(Z, y, C, sigma, tol)
    return StyleClassifier(models, mean, std, sigma, C)


# features -------------------------------------------------------------------

def extract_style_features(lanes, velocities, gaps, traffic_speed) -> StyleFeatures:
    """Features over one vehicle's window.

    ``traffic_speed`` is the mean speed of surrounding traffic at each slot,
    ``gaps`` the bumper gap to the leader (inf when the lane ahead is empty).
    """
    lanes = np.asarray(lanes)
    v = np.asarray(velocities, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    ref = np.broadcast_to(np.asarray(traffic_speed, dtype=np.float64), v.shape)
    n = len(v)
    if n < MIN_WINDOW:
        raise ValueError(f"window needs >= {MIN_WINDOW} timeslots, got {n}")
    if not (len(lanes) == len(gaps) == n):
        raise ValueError("window arrays differ in length")
    per100 = 100.0 / (n - 1)
    rel = float(np.mean(v - ref))
    # a gap counts as accepted when the driver holds or closes it without
    # braking; cut-ins that force a brake or that open up on their own say
    # nothing about the driver's own margin
    steady = (np.diff(v) >= -1e-9) & (np.diff(np.minimum(gaps, GAP_CAP)) <= 1e-9)
    held = np.append(steady, False)
    pool = gaps[held] if held.any() else gaps
    min_gap = float(min(max(np.min(pool), 0.0), GAP_CAP))
    lc = float(np.count_nonzero(np.diff(lanes)) * per100)
    brakes = float(np.count_nonzero(np.diff(v) < -1e-9) * per100)
    return StyleFeatures(rel, min_gap, lc, brakes)


def window_features(history, vehicle: int, start: int, length: int) -> StyleFeatures:
    """Features of participant ``vehicle`` over ``history[start:start+length]``.

    Traffic speed is the mean of the other vehicles in the same lane, falling
    back to the whole road when the vehicle is alone in its lane.
    """
    rows = history[start:start + length]
    lanes = np.array([r[0][vehicle] for r in rows])
    v = np.array([r[2][vehicle] for r in rows])
    gaps = np.array([r[3][vehicle] for r in rows])
    ref = np.empty(len(rows))
    for k, r in enumerate(rows):
        same = r[0] == r[0][vehicle]
        same[vehicle] = False
        ref[k] = r[2][same].mean() if same.any() else r[4]
    return extract_style_features(lanes, v, gaps, ref)


@dataclass
class StyleDataConfig:
    window: int = 300
    windows_per_episode: int = 90
    env: EnvConfig = None

    def __post_init__(self):
        if self.window < MIN_WINDOW:
            raise ValueError(f"window must be >= {MIN_WINDOW}")
        if self.env is None:
            self.env = EnvConfig(episode_length=5000.0, record_history=True)


def generate_style_dataset(n_windows: int, seed: int, cfg: Optional[StyleDataConfig] = None):
    """Labeled feature windows from simulated traffic.

    Labels are the participants' spawn styles. Classes are drawn in turn so
    the set is balanced. The ego follows the rule-based policy.
    """
    from .dtree import rule_policy
    cfg = cfg or StyleDataConfig()
    rng = np.random.default_rng(seed)
    seq = np.random.SeedSequence(seed)
    X, labels = [], []
    want = n_windows
    while len(X) < want:
        env_cfg = replace(cfg.env, record_history=True, rng_seed=int(seq.spawn(1)[0].generate_state(1)[0]))
        env = create_env(env_cfg)
        while not env.done and len(env.history) < cfg.window + 1:
            env.step(rule_policy(env.view()))
        if len(env.history) < cfg.window:
            continue
        hist = env.history[-cfg.window:]
        # distinct vehicles per episode, drawn without replacement
        by_style = {s: list(rng.permutation([i for i, st in enumerate(env.p_style) if st == s]))
                    for s in STYLES}
        for _ in range(cfg.windows_per_episode):
            if len(X) >= want:
                break
            style = CLASSES[len(X) % 3]
            pool = by_style.get(style, [])
            if not pool:
                break
            i = int(pool.pop())
            X.append(window_features(hist, i, 0, cfg.window))
            labels.append(style)
    return np.array(X, dtype=np.float64), labels


def write_feature_csv(path, X, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_NAMES + ("label",))
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [lab])


def read_feature_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != FEATURE_NAMES + ("label",):
            raise ValueError(f"bad header {reader.fieldnames}")
        X, labels = [], []
        for n, row in enumerate(reader, start=2):
            if row["label"] not in CLASSES:
                raise ValueError(f"line {n}: unknown label {row['label']!r}")
            X.append([float(row[k]) for k in FEATURE_NAMES])
            labels.append(row["label"])
    return np.array(X, dtype=np.float64).reshape(-1, len(FEATURE_NAMES)), labels


class StyleTagger:
    """Env hook: labels each participant from its recent history.

    Vehicles with fewer than ``window`` recorded slots are tagged ``normal``.
    The env must record history.
    """

    def __init__(self, classifier: StyleClassifier, window: int = MIN_WINDOW):
        if window < MIN_WINDOW:
            raise ValueError(f"window must be >= {MIN_WINDOW}")
        self.classifier = classifier
        self.window = window

    def __call__(self, env) -> list:
        if not env.config.record_history:
            raise ValueError("style tagging needs EnvConfig(record_history=True)")
        n = len(env.p_x)
        if len(env.history) < self.window:
            return ["normal"] * n
        start = len(env.history) - self.window
        feats = [window_features(env.history, i, start, self.window) for i in range(n)]
        return self.classifier.classify_many(feats) if n else []
