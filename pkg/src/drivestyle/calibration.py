"""Offline estimation of IDM parameters by minimizing mean 5 s position RMSE."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize
from scipy.stats import qmc, rankdata
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import DT, CarFollowingPair
from .exceptions import ConfigError, DataError, NumericalError, StyleTieError
from .idm import PARAM_NAMES, LITERATURE_PARAMS, IdmParams, compare_indices, simulate_batch

log = logging.getLogger(__name__)

DEFAULT_BOUNDS = {
    "v_star": (5.0, 45.0),
    "t_headway": (0.3, 4.0),
    "d_min": (0.05, 10.0),
    "a_max": (0.1, 4.0),
    "b_comf": (0.5, 5.0),
}
FEATURE_WINDOW = 15.0


def anchor_index(pair: CarFollowingPair, anchor="after_features", horizon: float = 5.0) -> int:
    """Start index of the evaluation window for ``pair``.

    ``"after_features"`` starts right after the 15 s feature window when the
    pair is long enough and falls back to the episode start; ``"start"``
    always uses the episode start; a number is taken as seconds.
    """
    n = int(round(horizon / DT))
    if anchor == "after_features":
        s = int(round(FEATURE_WINDOW / DT))
        return s if s + n < pair.n_samples else 0
    if anchor == "start":
        return 0
    return int(round(float(anchor) / DT))


class PredictionWindows:
    """Stacked 5 s prediction windows for a set of pairs, ready for batched rollout."""

    def __init__(self, pairs: Sequence[CarFollowingPair], starts: Sequence[int], horizon: float = 5.0,
                 every_frame: bool = False):
        n = int(round(horizon / DT))
        keep = [i for i, s in enumerate(starts) if 0 <= s and s + n < pairs[i].n_samples]
        self.excluded = len(pairs) - len(keep)
        if self.excluded:
            log.info("excluded %d pair(s) lacking a %.1f s prediction window", self.excluded, horizon)
        self.kept = keep
        self.n_steps = n
        self.idx = compare_indices(horizon, every_frame)
        rows = [(pairs[i], starts[i]) for i in keep]
        self.x0 = np.array([p.x[s] for p, s in rows])
        self.v0 = np.array([p.v[s] for p, s in rows])
        self.x_leader = np.array([p.x_leader[s:s + n + 1] for p, s in rows]).reshape(len(rows), n + 1)
        self.v_leader = np.array([p.v_leader[s:s + n + 1] for p, s in rows]).reshape(len(rows), n + 1)
        self.offset = np.array([p.x_leader[s] - p.x[s] - p.gap[s] for p, s in rows])
        self.observed = np.array([p.x[s + self.idx] for p, s in rows]).reshape(len(rows), len(self.idx))

    def __len__(self):
        return len(self.x0)

    def rmse(self, pv) -> np.ndarray:
        """Per-window RMSE; ``pv`` is (5,) or (len(self), 5)."""
        if len(self) == 0:
            return np.empty(0)
        xs, _, _, _ = simulate_batch(pv, self.x0, self.v0, self.x_leader, self.v_leader,
                                     self.offset, self.n_steps)
        err = xs[:, self.idx] - self.observed
        return np.sqrt(np.mean(err**2, axis=1))


def _windows(pairs, anchor="after_features", every_frame=False) -> PredictionWindows:
    return PredictionWindows(pairs, [anchor_index(p, anchor) for p in pairs], every_frame=every_frame)


def _fmean(x) -> float:
    # Exactly rounded sum: independent of pair order.
    return math.fsum(x) / len(x)


def mean_rmse(params: IdmParams, pairs: Sequence[CarFollowingPair], anchor="after_features",
              every_frame: bool = False) -> float:
    """Arithmetic mean of the per-pair 5 s RMSE."""
    w = _windows(pairs, anchor, every_frame)
    if len(w) == 0:
        raise DataError("no pair supports a 5 s prediction window")
    pv = params.as_array() if isinstance(params, IdmParams) else np.asarray(params, dtype=float)
    return _fmean(w.rmse(pv))


def sensitivity(params: IdmParams, pairs: Sequence[CarFollowingPair], step: float = 0.1,
                anchor="after_features", every_frame: bool = False) -> dict[str, list[float]]:
    """Mean RMSE with each parameter scaled by ``1 - step`` and ``1 + step``, others held fixed.

    A flat profile marks a parameter the data barely constrain.
    """
    w = _windows(pairs, anchor, every_frame)
    if len(w) == 0:
        raise DataError("no pair supports a 5 s prediction window")
    base = params.as_array()
    out = {}
    for i, name in enumerate(PARAM_NAMES):
        vals = []
        for f in (1.0 - step, 1.0 + step):
            pv = base.copy()
            pv[i] *= f
            vals.append(_fmean(w.rmse(pv)))
        out[name] = vals
    return out


@dataclass
class CalibrationResult:
    params: IdmParams
    objective_value: float
    evaluations: int
    converged: bool
    n_pairs: int = 0
    excluded: int = 0
    bounds_hit: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "objective_value": self.objective_value,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "n_pairs": self.n_pairs,
            "excluded": self.excluded,
            "bounds_hit": list(self.bounds_hit),
        }

    @classmethod
    def from_dict(cls, d) -> "CalibrationResult":
        d = dict(d)
        d["params"] = IdmParams.from_dict(d["params"])
        return cls(**d)


def _check_bounds(bounds: Mapping) -> tuple[np.ndarray, np.ndarray]:
    try:
        lo = np.array([float(bounds[k][0]) for k in PARAM_NAMES])
        hi = np.array([float(bounds[k][1]) for k in PARAM_NAMES])
    except (KeyError, IndexError, TypeError) as exc:
        raise ConfigError(f"bounds must give (lo, hi) for each of {PARAM_NAMES}") from exc
    if np.any(lo <= 0) or np.any(hi < lo):
        raise ConfigError("bounds must be positive with lo <= hi")
    return lo, hi


def _run_start(objective, u0, maxfev):
    d = len(u0)
    best = [math.inf, u0.copy()]
    count = [0]

    def f(u):
        count[0] += 1
        val = objective(u)
        if val < best[0]:
            best[0], best[1] = val, np.array(u, dtype=float)
        return val

    if maxfev <= d + 1:
        # Too few evaluations for a simplex; score the start point only.
        f(u0)
        return best[0], best[1], count[0], False
    simplex = np.repeat(u0[None, :], d + 1, axis=0)
    for j in range(d):
        step = 0.1 if u0[j] + 0.1 <= 1.0 else -0.1
        simplex[j + 1, j] += step
    res = minimize(f, u0, method="Nelder-Mead", bounds=[(0.0, 1.0)] * d,
                   options={"maxfev": maxfev, "initial_simplex": simplex, "xatol": 1e-4, "fatol": 1e-6})
    return best[0], best[1], count[0], bool(res.success)


def calibrate(pairs: Sequence[CarFollowingPair], bounds: Mapping | None = None, budget: int = 4000,
              seed: int = 0, n_starts: int = 16, initial_guesses: Sequence[IdmParams] = (),
              anchor="after_features", every_frame: bool = False, n_jobs: int = 1) -> CalibrationResult:
    """Minimize mean RMSE over ``pairs`` inside a box.

    Multi-start Nelder-Mead in box-normalized coordinates. Starts are the
    ``initial_guesses`` (clipped into the box) followed by Latin-hypercube
    samples; each start gets ``budget // n_starts`` evaluations. The best
    point ever evaluated is returned.
    """
    if not pairs:
        raise DataError("calibration needs at least one pair")
    if budget < 100:
        raise ConfigError(f"budget must be at least 100 evaluations, got {budget}")
    lo, hi = _check_bounds(bounds or DEFAULT_BOUNDS)
    width = hi - lo
    w = _windows(pairs, anchor, every_frame)
    if len(w) == 0:
        raise DataError("no pair supports a 5 s prediction window")

    def objective(u):
        pv = lo + np.clip(u, 0.0, 1.0) * width
        val = _fmean(w.rmse(pv))
        return val if math.isfinite(val) else math.inf

    guesses = [np.clip((g.as_array() - lo) / np.where(width > 0, width, 1.0), 0, 1) for g in initial_guesses]
    n_lhs = max(n_starts - len(guesses), 0)
    starts = guesses[:n_starts]
    if n_lhs:
        starts += list(qmc.LatinHypercube(d=len(lo), seed=np.random.default_rng(seed)).random(n_lhs))
    per_start = budget // len(starts)
    runs = Parallel(n_jobs=n_jobs)(delayed(_run_start)(objective, np.asarray(u0), per_start) for u0 in starts)
    evaluations = sum(r[2] for r in runs)
    best_i = min(range(len(runs)), key=lambda i: (runs[i][0], i))
    f_best, u_best, _, converged = runs[best_i]
    if not math.isfinite(f_best):
        raise NumericalError("every calibration evaluation was non-finite")
    pv = lo + np.clip(u_best, 0.0, 1.0) * width
    hit = [name for name, t, a, b in zip(PARAM_NAMES, pv, lo, hi)
           if b > a and (abs(t - a) <= 1e-6 * (b - a) or abs(t - b) <= 1e-6 * (b - a))]
    return CalibrationResult(IdmParams.from_array(pv), float(f_best), evaluations, converged,
                             n_pairs=len(w), excluded=w.excluded, bounds_hit=hit)


class IDMCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate`; ``fit`` takes a list of pairs."""

    def __init__(self, bounds=None, budget=4000, n_starts=16, initial_guesses=(LITERATURE_PARAMS,),
                 anchor="after_features", every_frame=False, random_state=0, n_jobs=1):
        self.bounds = bounds
        self.budget = budget
        self.n_starts = n_starts
        self.initial_guesses = initial_guesses
        self.anchor = anchor
        self.every_frame = every_frame
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, pairs, y=None):
        self.result_ = calibrate(pairs, self.bounds, self.budget, self.random_state, self.n_starts,
                                 self.initial_guesses, self.anchor, self.every_frame, self.n_jobs)
        self.params_ = self.result_.params
        return self

    def score(self, pairs, y=None):
        """Negative mean RMSE, so larger is better."""
        check_is_fitted(self)
        return -mean_rmse(self.params_, pairs, self.anchor, self.every_frame)


def label_styles(params: Mapping[int, IdmParams | CalibrationResult],
                 overrides: Mapping[int, str] | None = None) -> dict[int, str]:
    """Name clusters from their calibrated parameters.

    The timid cluster wins a Borda count over three criteria (small desired
    speed, large headway, large standstill gap). Of the rest, the one with
    the smallest standstill gap is "relatively aggressive"; others are
    "neutral".
    """
    keys = sorted(params)
    if overrides:
        missing = set(keys) - {int(k) for k in overrides}
        if missing:
            raise ConfigError(f"style overrides missing clusters {sorted(missing)}")
        return {k: str(overrides[k] if k in overrides else overrides[str(k)]) for k in keys}
    ps = [p.params if isinstance(p, CalibrationResult) else p for p in (params[k] for k in keys)]
    if len(ps) == 1:
        return {keys[0]: "neutral"}
    v = np.array([p.v_star for p in ps])
    t = np.array([p.t_headway for p in ps])
    d = np.array([p.d_min for p in ps])
    score = rankdata(-v) + rankdata(t) + rankdata(d)
    top = np.flatnonzero(score == score.max())
    if len(top) > 1:
        raise StyleTieError(f"clusters {[keys[i] for i in top]} tie for 'timid'; set style overrides")
    timid = int(top[0])
    rest = [i for i in range(len(ps)) if i != timid]
    d_rest = d[rest]
    low = [rest[i] for i in np.flatnonzero(d_rest == d_rest.min())]
    if len(low) > 1:
        raise StyleTieError(f"clusters {[keys[i] for i in low]} tie on d_min; set style overrides")
    names = {keys[i]: "neutral" for i in rest}
    names[keys[timid]] = "timid"
    names[keys[low[0]]] = "relatively aggressive"
    return names
