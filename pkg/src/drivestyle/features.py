"""Driving-style indicators computed from a car-following window."""
from __future__ import annotations

import csv
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import DT, CarFollowingPair
from .exceptions import DataError

FEATURE_SYMBOLS = tuple(f"X{i}" for i in range(1, 14))


class FeatureVector(NamedTuple):
    x1_max_speed: float
    x2_mean_speed: float
    x3_std_speed: float
    x4_max_accel: float
    x5_min_accel: float
    x6_mean_accel: float
    x7_std_accel: float
    x8_max_gap: float
    x9_min_gap: float
    x10_mean_gap: float
    x11_std_gap: float
    x12_mean_speed_diff: float
    x13_std_speed_diff: float

    def to_array(self) -> np.ndarray:
        return np.asarray(self, dtype=float)


def _std(x: np.ndarray) -> float:
    # Sample (n-1) convention; a single observation has no spread.
    return float(np.std(x, ddof=1)) if len(x) >= 2 else 0.0


def features_from_arrays(v, a, gap, v_leader) -> FeatureVector:
    """Compute the 13 indicators from aligned follower/leader kinematics."""
    v, a, gap, v_leader = (np.asarray(z, dtype=float) for z in (v, a, gap, v_leader))
    if len(v) == 0:
        raise DataError("cannot compute features on an empty window")
    if not np.all(np.isfinite(gap)):
        raise DataError("gap undefined in window (leader missing)")
    dv = v_leader - v
    return FeatureVector(
        float(v.max()), float(v.mean()), _std(v),
        float(a.max()), float(a.min()), float(a.mean()), _std(a),
        float(gap.max()), float(gap.min()), float(gap.mean()), _std(gap),
        float(dv.mean()), _std(dv),
    )


def extract_features(pair: CarFollowingPair, window: float = 15.0) -> FeatureVector:
    """Indicators over the first ``window`` seconds of ``pair``."""
    n = int(round(window / DT))
    if n < 1 or n > pair.n_samples:
        raise DataError(f"window {window} s exceeds episode of {pair.duration:.1f} s")
    return features_from_arrays(pair.v[:n], pair.a[:n], pair.gap[:n], pair.v_leader[:n])


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping car-following pairs to an (n, 13) matrix."""

    def __init__(self, window=15.0):
        self.window = window

    def fit(self, pairs, y=None):
        return self

    def transform(self, pairs):
        return np.array([extract_features(p, self.window) for p in pairs], dtype=float).reshape(-1, 13)


class Standardizer(TransformerMixin, BaseEstimator):
    """Z-score scaling with sample standard deviations.

    Unlike ``sklearn.preprocessing.StandardScaler`` this refuses zero-variance
    columns instead of silently leaving them unscaled.
    """

    def __init__(self, names=FEATURE_SYMBOLS):
        self.names = names

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        std = X.std(axis=0, ddof=1)
        zero = np.flatnonzero(~(std > 0))
        if zero.size:
            bad = [self.names[i] if i < len(self.names) else str(i) for i in zero]
            raise DataError(f"zero-variance feature(s): {', '.join(bad)}")
        self.mean_ = X.mean(axis=0)
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_2d=False)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self)
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_


def fit_standardizer(features: Sequence) -> Standardizer:
    return Standardizer().fit(np.asarray(features, dtype=float))


def standardize(s: Standardizer, f) -> np.ndarray:
    return s.transform(np.asarray(f, dtype=float))


def unstandardize(s: Standardizer, z) -> np.ndarray:
    return s.inverse_transform(z)


def write_feature_csv(path, X) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_SYMBOLS)
        for row in X:
            w.writerow([repr(float(x)) for x in row])


def read_feature_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != FEATURE_SYMBOLS:
        raise DataError(f"{path}: expected header {','.join(FEATURE_SYMBOLS)}")
    return np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, 13)
