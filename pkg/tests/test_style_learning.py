import numpy as np
import pytest
import sklearn.cluster
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import adjusted_rand_score

from drivestyle.exceptions import DataError
from drivestyle.style_learning import PCA, KMeans, _kmeanspp, _lloyd, assign, elbow_k, elbow_scan, fit_pca, kmeans_fit, project


def blobs(seed=0, n=30, spread=0.05):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    X = np.concatenate([c + spread * rng.normal(size=(n, 2)) for c in centers])
    return X, np.repeat([0, 1, 2], n)


def test_rank_one_data():
    rng = np.random.default_rng(0)
    direction = rng.normal(size=13)
    X = rng.normal(size=(40, 1)) * direction
    pca = fit_pca(X)
    assert pca.explained_variance_ratio_[0] == pytest.approx(1.0)
    assert np.allclose(pca.explained_variance_ratio_[1:], 0, atol=1e-12)


def test_pca_against_svd():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 13)) @ rng.normal(size=(13, 13))
    X -= X.mean(axis=0)
    pca = PCA(13).fit(X)
    # Independent route: singular values of the centered data.
    s = np.linalg.svd(X, compute_uv=False)
    assert np.allclose(pca.explained_variance_, s**2 / (len(X) - 1), rtol=1e-9)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    assert np.allclose(np.abs(pca.components_ @ vt.T), np.eye(13), atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (20, 13), elements=st.floats(-10, 10)))
def test_pca_orthonormal_and_ordered(X):
    if np.var(X) < 1e-6:
        return
    pca = PCA(13).fit(X)
    C = pca.components_
    assert np.allclose(C @ C.T, np.eye(13), atol=1e-9)
    r = pca.explained_variance_ratio_
    assert np.all(np.diff(r) <= 1e-12) and r.sum() <= 1 + 1e-9 and np.all(r >= 0)
    assert np.allclose(pca.inverse_transform(pca.transform(X)), X, atol=1e-9)
    Z = PCA(2).fit(X).transform(X)
    x = X[0]
    assert np.dot(Z[0], Z[0]) <= np.dot(x, x) + 1e-9


def test_projected_covariance_is_diagonal():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 13)) @ rng.normal(size=(13, 13))
    X = (X - X.mean(0)) / X.std(0, ddof=1)
    Z = PCA(13).fit_transform(X)
    cov = np.cov(Z, rowvar=False)
    assert np.allclose(cov - np.diag(np.diag(cov)), 0, atol=1e-8)


def test_project_basics():
    rng = np.random.default_rng(3)
    pca = fit_pca(rng.normal(size=(30, 13)))
    assert np.array_equal(project(pca, np.zeros(13)), np.zeros(2))
    assert np.allclose(project(pca, pca.components_[0]), [1.0, 0.0], atol=1e-12)


def test_pca_needs_enough_samples():
    with pytest.raises(DataError):
        PCA().fit(np.ones((5, 13)))


def test_kmeans_single_cluster_is_mean():
    X, _ = blobs()
    km = kmeans_fit(X, 1)
    assert np.allclose(km.cluster_centers_[0], X.mean(axis=0))
    assert km.inertia_ == pytest.approx(((X - X.mean(0)) ** 2).sum())


def test_kmeans_recovers_blobs_and_matches_sklearn():
    X, y = blobs()
    km = kmeans_fit(X, 3)
    assert adjusted_rand_score(y, km.labels_) == 1.0
    ref = sklearn.cluster.KMeans(3, n_init=10, random_state=0).fit(X)
    assert km.inertia_ == pytest.approx(ref.inertia_, rel=1e-9)


def test_kmeans_labels_are_nearest_centroid():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 2))
    km = KMeans(4).fit(X)
    d = ((X[:, None] - km.cluster_centers_[None]) ** 2).sum(-1)
    assert np.array_equal(km.labels_, d.argmin(1))
    assert km.inertia_ == pytest.approx(d.min(1).sum())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_lloyd_sse_monotone(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2))
    _, _, history = _lloyd(X, _kmeanspp(X, k, rng), 300)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_kmeans_deterministic():
    X = np.random.default_rng(5).normal(size=(50, 2))
    a, b = KMeans(3, random_state=7).fit(X), KMeans(3, random_state=7).fit(X)
    assert np.array_equal(a.cluster_centers_, b.cluster_centers_)


def test_empty_cluster_reseeded_at_farthest_point():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0]])
    centers, labels, _ = _lloyd(X, np.array([[0.05, 0.0], [100.0, 0.0]]), 10)
    assert sorted(np.bincount(labels)) == [1, 2]
    assert np.allclose(centers[1], [10.0, 0.0])


def test_kmeans_too_many_clusters():
    with pytest.raises(DataError):
        KMeans(5).fit(np.zeros((3, 2)))


def test_assign():
    km = KMeans(3).fit(np.array([[0.0, 0.0], [0.0, 0.1], [2.0, 0.0], [2.0, 0.1], [1.0, 5.0], [1.0, 5.1]]))
    for j, c in enumerate(km.cluster_centers_):
        assert assign(km, c) == j
    km.cluster_centers_ = np.array([[0.0, 0.0], [10.0, 10.0], [2.0, 0.0]])
    assert assign(km, [1.0, 0.0]) == 0


def test_assign_agrees_with_brute_force():
    rng = np.random.default_rng(6)
    km = KMeans(4).fit(rng.normal(size=(40, 2)))
    for p in rng.normal(size=(200, 2)) * 3:
        brute = min(range(4), key=lambda j: (np.sum((p - km.cluster_centers_[j]) ** 2), j))
        assert assign(km, p) == brute


def test_elbow_on_blobs():
    X, _ = blobs(spread=0.2)
    curve = elbow_scan(X)
    ks = [k for k, _ in curve]
    sse = np.array([s for _, s in curve])
    assert ks == list(range(1, 11))
    assert sse[0] > 100 * sse[2]
    assert np.all(np.diff(np.minimum.accumulate(sse)) <= 1e-9)
    assert elbow_k(curve) == 3


def test_elbow_errors_and_degenerate():
    with pytest.raises(DataError):
        elbow_scan(np.zeros((3, 2)), range(1, 5))
    assert elbow_k([(1, 5.0), (2, 1.0)]) == 1
    # A straight line has no knee: ties resolve to the smallest K.
    assert elbow_k([(k, 10.0 - k) for k in range(1, 6)]) == 1
