"""Intelligent Driver Model: acceleration law, rollout, RMSE and likelihood.

The rollout uses the ballistic update at ``dt = 0.1 s``::

    v' = max(0, v + a dt)
    x' = x + (v + v') dt / 2

with the gap recomputed from the observed leader at every step. All
functions accept numpy arrays and broadcast over a leading batch axis so a
whole cluster of pairs is simulated in one pass.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .data import DT, CarFollowingPair
from .exceptions import DataError

PARAM_NAMES = ("v_star", "t_headway", "d_min", "a_max", "b_comf")
MIN_GAP = 0.01


@dataclass(frozen=True)
class IdmParams:
    v_star: float
    t_headway: float
    d_min: float
    a_max: float
    b_comf: float
    delta: float = 4.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            if not getattr(self, name) > 0:
                raise ValueError(f"IDM parameter {name} must be positive, got {getattr(self, name)}")
        if self.delta != 4.0:
            raise ValueError("the free-drive exponent is fixed at 4")

    def as_array(self) -> np.ndarray:
        return np.array([self.v_star, self.t_headway, self.d_min, self.a_max, self.b_comf])

    @classmethod
    def from_array(cls, pv) -> "IdmParams":
        return cls(*(float(x) for x in pv))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "IdmParams":
        return cls(**{k: float(v) for k, v in d.items()})


# Literature recommendation used as the uncalibrated baseline.
LITERATURE_PARAMS = IdmParams(33.3, 2.0, 1.6, 0.73, 1.67)
# Reference single-cluster calibration and per-cluster prototypes for the I-80 corpus.
REFERENCE_AGGREGATE = IdmParams(19.0, 1.0, 0.3, 0.4, 1.4)
REFERENCE_PROTOTYPES = {
    0: IdmParams(34.7, 1.0, 2.9, 0.5, 1.5),
    1: IdmParams(35.0, 1.0, 0.1, 0.4, 1.5),
    2: IdmParams(18.5, 1.9, 4.5, 0.4, 1.4),
}
PRESETS = {
    "lit": LITERATURE_PARAMS,
    "aggregate": REFERENCE_AGGREGATE,
    **{f"cluster{k}": p for k, p in REFERENCE_PROTOTYPES.items()},
}


class CfState(NamedTuple):
    v: float
    v_leader: float
    d: float


class SimulationResult(NamedTuple):
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    collision: bool


class PredictionResult(NamedTuple):
    predicted_positions: np.ndarray
    observed_positions: np.ndarray
    rmse: float
    collision: bool


def _theta(p) -> np.ndarray:
    return p.as_array() if isinstance(p, IdmParams) else np.asarray(p, dtype=float)


def acceleration(pv, v, v_leader, d):
    """Vectorised IDM acceleration. ``pv`` (parameter vector) is (5,) or (m, 5), broadcasting against the states."""
    pv = np.asarray(pv, dtype=float)
    v_star, t_hw, d_min, a_max, b_comf = np.moveaxis(pv, -1, 0)
    v = np.asarray(v, dtype=float)
    interaction = v * t_hw - v * (v_leader - v) / (2.0 * np.sqrt(a_max * b_comf))
    d_star = d_min + np.maximum(interaction, 0.0)
    return a_max * (1.0 - (v / v_star) ** 4 - (d_star / d) ** 2)


def idm_acceleration(p: IdmParams, s: CfState) -> float:
    if s.v < 0 or not s.d > 0:
        raise ValueError(f"invalid car-following state {s}")
    return float(acceleration(p.as_array(), s.v, s.v_leader, s.d))


def equilibrium_gap(p: IdmParams, v: float) -> float:
    """Gap at which a follower matching its leader's speed ``v`` does not accelerate."""
    return (p.d_min + v * p.t_headway) / math.sqrt(1.0 - (v / p.v_star) ** p.delta)


def simulate_batch(pv, x0, v0, x_leader, v_leader, offset, n_steps, dt=DT):
    """Roll ``m`` followers forward ``n_steps`` against recorded leaders.

    ``x_leader``/``v_leader`` are (m, >= n_steps + 1); ``offset`` converts the
    leader position to its rear bumper. Returns positions, speeds and
    accelerations of shape (m, n_steps + 1) (the last acceleration row is
    the one that would be applied next) and a per-row collision flag.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    m = len(x0)
    x_leader = np.asarray(x_leader, dtype=float).reshape(m, -1)
    v_leader = np.asarray(v_leader, dtype=float).reshape(m, -1)
    if x_leader.shape[1] < n_steps + 1:
        raise DataError(f"leader track of {x_leader.shape[1]} frames cannot cover {n_steps} steps")
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (m,))
    pv = np.asarray(pv, dtype=float)
    xs = np.empty((m, n_steps + 1))
    vs = np.empty((m, n_steps + 1))
    acc = np.empty((m, n_steps + 1))
    collision = np.zeros(m, dtype=bool)
    x = x0.copy()
    v = np.broadcast_to(np.asarray(v0, dtype=float), (m,)).copy()
    xs[:, 0], vs[:, 0] = x, v
    for i in range(n_steps + 1):
        d = x_leader[:, i] - offset - x
        hit = d <= 0
        if hit.any():
            collision |= hit
            d = np.where(hit, MIN_GAP, d)
        a = acceleration(pv, v, v_leader[:, i], d)
        acc[:, i] = a
        if i == n_steps:
            break
        v_next = np.maximum(v + a * dt, 0.0)
        x = x + (v + v_next) * (dt / 2.0)
        v = v_next
        xs[:, i + 1], vs[:, i + 1] = x, v
    return xs, vs, acc, collision


def simulate(p: IdmParams, x0: float, v0: float, x_leader, v_leader, leader_offset: float,
             horizon: float = 5.0, dt: float = DT) -> SimulationResult:
    """Single-follower rollout over ``horizon`` seconds."""
    n = int(round(horizon / dt))
    xs, vs, acc, col = simulate_batch(_theta(p), [x0], [v0], np.asarray(x_leader)[None, :n + 1],
                                      np.asarray(v_leader)[None, :n + 1], [leader_offset], n, dt)
    return SimulationResult(np.arange(n + 1) * dt, xs[0], vs[0], acc[0], bool(col[0]))


def leader_offset(pair: CarFollowingPair, index: int) -> float:
    """Leader length implied by the recorded positions and gap at ``index``."""
    return float(pair.x_leader[index] - pair.x[index] - pair.gap[index])


def compare_indices(horizon: float = 5.0, every_frame: bool = False, dt: float = DT) -> np.ndarray:
    """Steps after the start at which predicted and observed positions are compared."""
    n = int(round(horizon / dt))
    if every_frame:
        return np.arange(1, n + 1)
    per_sec = int(round(1.0 / dt))
    return np.arange(per_sec, n + 1, per_sec)


def rmse_5s(p: IdmParams, pair: CarFollowingPair, start: float = 0.0, horizon: float = 5.0,
            every_frame: bool = False) -> PredictionResult:
    """Position RMSE of an IDM prediction starting at ``start`` seconds into ``pair``.

    By default the comparison uses the whole-second instants 1..5 s after the
    start; ``every_frame=True`` uses all 50 frames instead.
    """
    s = int(round(start / DT))
    n = int(round(horizon / DT))
    if s < 0 or s + n >= pair.n_samples:
        raise DataError(f"pair {pair.key} lacks {horizon} s of data after t={start}")
    sl = slice(s, s + n + 1)
    xs, _, _, col = simulate_batch(_theta(p), [pair.x[s]], [pair.v[s]], pair.x_leader[None, sl],
                                   pair.v_leader[None, sl], [leader_offset(pair, s)], n)
    idx = compare_indices(horizon, every_frame)
    pred = xs[0, idx]
    obs = pair.x[s + idx]
    return PredictionResult(pred, obs, float(np.sqrt(np.mean((pred - obs) ** 2))), bool(col[0]))


def residuals(p, v, v_leader, gap, a_real) -> np.ndarray:
    """Observed minus IDM acceleration at each recorded state (no rollout)."""
    return np.asarray(a_real, dtype=float) - acceleration(_theta(p), v, v_leader, gap)


def gaussian_log_likelihood(ssr, n, sigma):
    """Sum over ``n`` points of the normal log-density given the residual sum of squares."""
    return -ssr / (2.0 * sigma**2) - n * math.log(math.sqrt(2.0 * math.pi) * sigma)


def log_likelihood(p, sigma: float, v, v_leader, gap, a_real) -> float:
    """Log-likelihood of observed accelerations under IDM plus iid N(0, sigma^2) noise.

    Each point is scored at its observed state, so no simulation is involved.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    r = residuals(p, v, v_leader, gap, a_real)
    if r.size == 0:
        raise DataError("log-likelihood needs at least one data point")
    return float(gaussian_log_likelihood(float(np.dot(r, r)), r.size, sigma))
