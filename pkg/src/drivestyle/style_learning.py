"""Dimension reduction and clustering of standardized driving-style features."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DataError, NumericalError


class PCA(TransformerMixin, BaseEstimator):
    """Principal components from the eigendecomposition of the sample covariance.

    All components are kept in ``components_``; ``transform`` projects onto the
    first ``n_components`` of them. Projection does not re-center: inputs are
    expected to be standardized already, so the training mean is zero.
    """

    def __init__(self, n_components=2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_array(X)
        n, d = X.shape
        if n < d:
            raise DataError(f"PCA needs at least {d} samples, got {n}")
        if not 1 <= self.n_components <= d:
            raise DataError(f"n_components must be in [1, {d}], got {self.n_components}")
        cov = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
        eigval, eigvec = np.linalg.eigh(cov)
        order = np.argsort(eigval, kind="stable")[::-1]
        eigval = np.clip(eigval[order], 0.0, None)
        comps = eigvec[:, order].T
        # Deterministic sign: largest-magnitude loading positive.
        idx = np.argmax(np.abs(comps), axis=1)
        comps *= np.sign(comps[np.arange(d), idx])[:, None]
        total = eigval.sum()
        if not total > 0:
            raise NumericalError("PCA input has zero total variance")
        self.components_ = comps
        self.explained_variance_ = eigval
        self.explained_variance_ratio_ = eigval / total
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = np.asarray(X, dtype=float)
        return X @ self.components_[: self.n_components].T

    def inverse_transform(self, Z):
        check_is_fitted(self)
        Z = np.asarray(Z, dtype=float)
        return Z @ self.components_[: Z.shape[-1]]


def fit_pca(standardized, n_kept=2) -> PCA:
    return PCA(n_components=n_kept).fit(standardized)


def project(model: PCA, standardized) -> np.ndarray:
    return model.transform(standardized)


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=-1)


def _kmeanspp(X, k, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def _lloyd(X, centers, max_iter):
    d2 = _sq_dists(X, centers)
    labels = np.argmin(d2, axis=1)
    history = [float(d2[np.arange(len(X)), labels].sum())]
    for _ in range(max_iter):
        k = len(centers)
        new = np.empty_like(centers)
        counts = np.bincount(labels, minlength=k)
        own = d2[np.arange(len(X)), labels]
        taken = set()
        for j in range(k):
            if counts[j]:
                new[j] = X[labels == j].mean(axis=0)
            else:
                # Empty cluster: move it onto the point farthest from its centroid.
                for i in np.argsort(-own, kind="stable"):
                    if i not in taken:
                        taken.add(i)
                        new[j] = X[i]
                        break
        centers = new
        d2 = _sq_dists(X, centers)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(X)), new_labels].sum()))
        converged = np.array_equal(new_labels, labels)
        labels = new_labels
        if converged:
            break
    return centers, labels, history


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's algorithm with k-means++ seeding and best-of-``n_init`` restarts.

    Each restart draws from its own child of ``SeedSequence(random_state)``, so
    results do not depend on the order in which restarts are evaluated.
    """

    def __init__(self, n_clusters=3, n_init=20, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        k = self.n_clusters
        if k < 1 or k > len(X):
            raise DataError(f"cannot form {k} clusters from {len(X)} points")
        best = None
        for ss in np.random.SeedSequence(self.random_state).spawn(self.n_init):
            rng = np.random.default_rng(ss)
            run = _lloyd(X, _kmeanspp(X, k, rng), self.max_iter)
            if best is None or run[2][-1] < best[2][-1]:
                best = run
        self.cluster_centers_, self.labels_, self.sse_history_ = best
        self.inertia_ = self.sse_history_[-1]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.argmin(_sq_dists(X, self.cluster_centers_), axis=1)

    def transform(self, X):
        """Euclidean distance to every centroid."""
        check_is_fitted(self)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.sqrt(_sq_dists(X, self.cluster_centers_))


def kmeans_fit(points, k, restarts=20, seed=0) -> KMeans:
    return KMeans(n_clusters=k, n_init=restarts, random_state=seed).fit(points)


def assign(model: KMeans, point) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    return int(model.predict(np.asarray(point, dtype=float).reshape(1, -1))[0])


def elbow_scan(points, k_range=range(1, 11), restarts=20, seed=0) -> list[tuple[int, float]]:
    points = check_array(points)
    ks = sorted(set(k_range))
    if ks[-1] > len(points):
        raise DataError(f"k={ks[-1]} exceeds the {len(points)} available points")
    return [(k, kmeans_fit(points, k, restarts, seed).inertia_) for k in ks]


def elbow_k(curve: list[tuple[int, float]]) -> int:
    """K whose normalized SSE lies furthest below the chord joining the curve's ends.

    Past that point the SSE decreases roughly linearly. Ties go to the smaller K.
    """
    ks = np.array([k for k, _ in curve], dtype=float)
    sse = np.array([s for _, s in curve], dtype=float)
    if len(ks) < 3 or sse[0] <= sse[-1]:
        return int(ks[0])
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    y = (sse - sse[-1]) / (sse[0] - sse[-1])
    return int(ks[int(np.argmax((1.0 - x) - y))])
