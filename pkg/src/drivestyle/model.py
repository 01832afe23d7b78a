"""End-to-end estimator: learn a style library offline, recognize styles online."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .calibration import IDMCalibrator, label_styles
from .exceptions import ConfigError
from .features import FeatureExtractor, Standardizer
from .idm import LITERATURE_PARAMS
from .recognition import DEFAULT_SIGMA, ObservationWindow, StyleLibrary, recognize_m1, recognize_m2
from .style_learning import PCA, KMeans, elbow_k, elbow_scan

log = logging.getLogger(__name__)


class _Identity(Standardizer):
    """Pass-through scaler used when features are clustered unstandardized."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        self.mean_ = np.zeros(X.shape[1])
        self.scale_ = np.ones(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self


class DrivingStyleModel(BaseEstimator):
    """Features -> standardize -> PCA -> K-means -> per-cluster IDM calibration.

    ``fit`` takes the offline car-following pairs and builds ``library_``;
    ``predict`` maps observation windows to cluster indices with either the
    nearest-centroid method (``"m1"``) or the likelihood method (``"m2"``).
    """

    def __init__(self, n_clusters=3, n_components=2, feature_window=15.0, standardize=True, n_init=20,
                 k_range=(1, 10), calibration_budget=4000, n_starts=16, bounds=None,
                 anchor="after_features", every_frame=False, style_overrides=None, sigma=DEFAULT_SIGMA,
                 method="m2", random_state=0, n_jobs=1):
        self.n_clusters = n_clusters
        self.n_components = n_components
        self.feature_window = feature_window
        self.standardize = standardize
        self.n_init = n_init
        self.k_range = k_range
        self.calibration_budget = calibration_budget
        self.n_starts = n_starts
        self.bounds = bounds
        self.anchor = anchor
        self.every_frame = every_frame
        self.style_overrides = style_overrides
        self.sigma = sigma
        self.method = method
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _calibrator(self, seed):
        return IDMCalibrator(bounds=self.bounds, budget=self.calibration_budget, n_starts=self.n_starts,
                             initial_guesses=(LITERATURE_PARAMS,), anchor=self.anchor, every_frame=self.every_frame,
                             random_state=seed, n_jobs=self.n_jobs)

    def fit(self, pairs, y=None):
        pairs = list(pairs)
        self.features_ = FeatureExtractor(self.feature_window).transform(pairs)
        self.standardizer_ = (Standardizer() if self.standardize else _Identity()).fit(self.features_)
        Z = self.standardizer_.transform(self.features_)
        self.pca_ = PCA(self.n_components).fit(Z)
        P = self.pca_.transform(Z)
        lo, hi = self.k_range
        self.elbow_ = elbow_scan(P, range(lo, min(hi, len(P)) + 1), self.n_init, self.random_state)
        self.elbow_k_ = elbow_k(self.elbow_)
        if self.elbow_k_ != self.n_clusters:
            log.info("elbow suggests K=%d; using configured K=%d", self.elbow_k_, self.n_clusters)
        self.kmeans_ = KMeans(self.n_clusters, n_init=self.n_init, random_state=self.random_state).fit(P)
        self.labels_ = self.kmeans_.labels_

        seeds = np.random.SeedSequence(self.random_state).generate_state(self.n_clusters + 1)
        self.calibration_ = {}
        for k in range(self.n_clusters):
            members = [p for p, lab in zip(pairs, self.labels_) if lab == k]
            self.calibration_[k] = self._calibrator(int(seeds[k])).fit(members).result_
        self.aggregate_ = self._calibrator(int(seeds[-1])).fit(pairs).result_
        self.styles_ = label_styles(self.calibration_, self.style_overrides)
        self.library_ = StyleLibrary(
            standardizer=self.standardizer_,
            pca=self.pca_,
            kmeans=self.kmeans_,
            prototypes={k: r.params for k, r in self.calibration_.items()},
            styles=self.styles_,
            baselines={"lit": LITERATURE_PARAMS, "aggregate": self.aggregate_.params},
            sigma_default=self.sigma,
        )
        return self

    def recognize(self, window: ObservationWindow):
        check_is_fitted(self)
        if self.method == "m1":
            return recognize_m1(self.library_, window)
        if self.method == "m2":
            return recognize_m2(self.library_, window, self.sigma)
        raise ConfigError(f"unknown recognition method {self.method!r}")

    def predict(self, windows):
        return np.array([self.recognize(w).cluster for w in windows], dtype=int)

    def predict_params(self, windows):
        return [self.recognize(w).params for w in windows]
