"""Online driving-style recognition from a short observation window."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .data import DT, CarFollowingPair
from .exceptions import DataError
from .features import Standardizer, features_from_arrays
from .idm import (REFERENCE_AGGREGATE, LITERATURE_PARAMS, IdmParams, PredictionResult, acceleration,
                  compare_indices, gaussian_log_likelihood, simulate_batch)
from .style_learning import PCA, KMeans

LIBRARY_SCHEMA = "drivestyle.library/1"
DEFAULT_SIGMA = 0.15

_FIELDS = ("t", "x", "v", "a", "x_leader", "v_leader", "gap")


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """Follower/leader kinematics observed so far, contiguous at 10 Hz."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    x_leader: np.ndarray
    v_leader: np.ndarray
    gap: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        for name in _FIELDS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise DataError(f"window field {name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if n > 1 and not np.allclose(np.diff(self.t), DT, atol=1e-6):
            raise DataError("window samples are not contiguous at 0.1 s")

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def t_dur(self) -> float:
        return self.n * DT

    @classmethod
    def empty(cls) -> "ObservationWindow":
        return cls(*(np.empty(0) for _ in _FIELDS))

    @classmethod
    def from_pair(cls, pair: CarFollowingPair, t_dur: float) -> "ObservationWindow":
        """The first ``t_dur`` seconds of ``pair`` (copies; later frames are not reachable)."""
        n = int(round(t_dur / DT))
        if n < 1 or n > pair.n_samples:
            raise DataError(f"cannot take {t_dur} s from a {pair.duration:.1f} s pair")
        return cls(pair.t[:n].copy(), pair.x[:n].copy(), pair.v[:n].copy(), pair.a[:n].copy(),
                   pair.x_leader[:n].copy(), pair.v_leader[:n].copy(), pair.gap[:n].copy())

    def __eq__(self, other):
        return isinstance(other, ObservationWindow) and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in _FIELDS)


def accumulate(existing: ObservationWindow, new: ObservationWindow) -> ObservationWindow:
    """Append ``new`` samples; they must continue ``existing`` without gap or overlap."""
    if existing.n and new.n and abs(new.t[0] - existing.t[-1] - DT) > 1e-6:
        raise DataError(f"new samples start at t={new.t[0]:.3f}, expected {existing.t[-1] + DT:.3f}")
    return ObservationWindow(*(np.concatenate([getattr(existing, f), getattr(new, f)]) for f in _FIELDS))


@dataclass
class StyleLibrary:
    """Everything the online part needs, learned offline."""

    standardizer: Standardizer
    pca: PCA
    kmeans: KMeans
    prototypes: dict[int, IdmParams]
    styles: dict[int, str]
    baselines: dict[str, IdmParams] = field(
        default_factory=lambda: {"lit": LITERATURE_PARAMS, "aggregate": REFERENCE_AGGREGATE})
    sigma_default: float = DEFAULT_SIGMA
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.kmeans.cluster_centers_)
        if sorted(self.prototypes) != list(range(k)):
            raise DataError(f"prototypes must cover clusters 0..{k - 1}")
        if not 0 < self.sigma_default <= 0.5:
            raise DataError(f"sigma_default must be in (0, 0.5], got {self.sigma_default}")

    @property
    def n_clusters(self) -> int:
        return len(self.prototypes)

    def prototype_matrix(self) -> np.ndarray:
        return np.array([self.prototypes[k].as_array() for k in range(self.n_clusters)])

    def to_dict(self) -> dict:
        return {
            "schema": LIBRARY_SCHEMA,
            "standardizer": {"means": self.standardizer.mean_.tolist(), "stds": self.standardizer.scale_.tolist()},
            "pca": {
                "components": self.pca.components_.tolist(),
                "explained_variance_ratio": self.pca.explained_variance_ratio_.tolist(),
                "n_kept": int(self.pca.n_components),
            },
            "kmeans": {"centroids": self.kmeans.cluster_centers_.tolist(), "sse": float(self.kmeans.inertia_)},
            "prototypes": {str(k): p.to_dict() for k, p in sorted(self.prototypes.items())},
            "styles": {str(k): s for k, s in sorted(self.styles.items())},
            "baselines": {name: p.to_dict() for name, p in sorted(self.baselines.items())},
            "sigma_default": self.sigma_default,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StyleLibrary":
        if d.get("schema") != LIBRARY_SCHEMA:
            raise DataError(f"not a style library (schema {d.get('schema')!r})")
        st = Standardizer()
        st.mean_ = np.array(d["standardizer"]["means"])
        st.scale_ = np.array(d["standardizer"]["stds"])
        st.n_features_in_ = len(st.mean_)
        pca = PCA(n_components=d["pca"]["n_kept"])
        pca.components_ = np.array(d["pca"]["components"])
        pca.explained_variance_ratio_ = np.array(d["pca"]["explained_variance_ratio"])
        pca.n_features_in_ = pca.components_.shape[1]
        centroids = np.array(d["kmeans"]["centroids"])
        km = KMeans(n_clusters=len(centroids))
        km.cluster_centers_ = centroids
        km.inertia_ = d["kmeans"]["sse"]
        km.n_features_in_ = centroids.shape[1]
        return cls(
            standardizer=st,
            pca=pca,
            kmeans=km,
            prototypes={int(k): IdmParams.from_dict(p) for k, p in d["prototypes"].items()},
            styles={int(k): s for k, s in d["styles"].items()},
            baselines={k: IdmParams.from_dict(p) for k, p in d["baselines"].items()},
            sigma_default=float(d["sigma_default"]),
            metadata=dict(d.get("metadata", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "StyleLibrary":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"cannot read style library {path}: {exc}") from exc


class RecognitionOutcome(NamedTuple):
    cluster: int
    style_name: str
    score: float
    params: IdmParams
    per_cluster_scores: tuple[float, ...]


def _outcome(lib: StyleLibrary, k: int, scores) -> RecognitionOutcome:
    return RecognitionOutcome(k, lib.styles.get(k, str(k)), float(scores[k]), lib.prototypes[k],
                              tuple(float(s) for s in scores))


def recognize_m1(lib: StyleLibrary, w: ObservationWindow) -> RecognitionOutcome:
    """Nearest centroid in the offline principal-component space."""
    if w.n < 1:
        raise DataError("empty observation window")
    f = features_from_arrays(w.v, w.a, w.gap, w.v_leader).to_array()
    z = lib.pca.transform(lib.standardizer.transform(f))
    dist = np.sqrt(((lib.kmeans.cluster_centers_ - z) ** 2).sum(axis=1))
    return _outcome(lib, int(np.argmin(dist)), dist)


def likelihood_scores(lib: StyleLibrary, w: ObservationWindow, sigma: float) -> np.ndarray:
    """Log-likelihood of the window's accelerations under each prototype."""
    pv = lib.prototype_matrix()
    a_idm = acceleration(pv[:, None, :], w.v[None, :], w.v_leader[None, :], w.gap[None, :])
    r = w.a[None, :] - a_idm
    ssr = np.einsum("kn,kn->k", r, r)
    return gaussian_log_likelihood(ssr, w.n, sigma)


def recognize_m2(lib: StyleLibrary, w: ObservationWindow, sigma: float | None = None) -> RecognitionOutcome:
    """Prototype maximizing the local Gaussian log-likelihood; ties go to the lowest index."""
    sigma = lib.sigma_default if sigma is None else sigma
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if w.n < 1:
        raise DataError("empty observation window")
    if not np.all(w.gap > 0):
        raise DataError("window contains non-positive gaps")
    scores = likelihood_scores(lib, w, sigma)
    return _outcome(lib, int(np.argmax(scores)), scores)


def predict_trajectory(outcome: RecognitionOutcome | IdmParams, x0: float, v0: float, x_leader, v_leader,
                       leader_offset: float, horizon: float = 5.0, observed=None) -> PredictionResult:
    """Roll the recognized parameters forward against the given leader track.

    ``observed`` (follower positions on the same 10 Hz grid, starting at the
    current instant) enables the RMSE; otherwise ``rmse`` is NaN.
    """
    params = outcome.params if isinstance(outcome, RecognitionOutcome) else outcome
    n = int(round(horizon / DT))
    xs, _, _, col = simulate_batch(params.as_array(), [x0], [v0], np.asarray(x_leader, float)[None, :n + 1],
                                   np.asarray(v_leader, float)[None, :n + 1], [leader_offset], n)
    idx = compare_indices(horizon)
    pred = xs[0, idx]
    if observed is None:
        return PredictionResult(pred, np.full(len(idx), np.nan), float("nan"), bool(col[0]))
    obs = np.asarray(observed, dtype=float)[idx]
    return PredictionResult(pred, obs, float(np.sqrt(np.mean((pred - obs) ** 2))), bool(col[0]))
