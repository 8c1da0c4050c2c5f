import numpy as np
import pytest
from hypothesis import settings

from lanerl.sim import STYLE_GAP, EnvConfig, create_env

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def place(env, cars):
    """Replace the traffic of ``env`` with ``cars`` = [(lane, rel_x, v), ...]
    given relative to the ego's rear bumper. Participants drive as normal
    style and never change lanes, so scripted scenes stay put."""
    n = len(cars)
    ring = env.config.ring_length
    env.p_lane = np.array([c[0] for c in cars], dtype=np.int64)
    env.p_x = np.mod(np.array([env.ego_x + c[1] for c in cars], dtype=np.float64), ring)
    env.p_v = np.array([c[2] for c in cars], dtype=np.float64)
    env.p_target = env.p_v.copy()
    env.p_style = ["normal"] * n
    env.p_gap = np.full(n, STYLE_GAP["normal"])
    env.p_lc = np.zeros(n) if n else np.zeros(0)
    env.p_odo = env.p_x.copy()
    env.p_ids = np.arange(1, n + 1)
    frame = env._frame()
    env._frames = [frame, frame, frame]
    return env


def empty_env(lane=1, v=None, **kw):
    cfg = EnvConfig(participant_count=0, **kw)
    env = create_env(cfg)
    env.ego_lane = lane
    if v is not None:
        env.ego_v = float(v)
    return place(env, [])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

