import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from drivestyle.data import DT, CarFollowingPair
from drivestyle.exceptions import DataError
from drivestyle.features import (
    FEATURE_SYMBOLS, FeatureExtractor, FeatureVector, Standardizer, extract_features, features_from_arrays,
    fit_standardizer, read_feature_csv, standardize, unstandardize, write_feature_csv,
)
from drivestyle.style_learning import KMeans, PCA

from conftest import constant_pair


def test_constant_cruise():
    f = extract_features(constant_pair(200, v=10.0, gap=20.0))
    assert f == FeatureVector(10, 10, 0, 0, 0, 0, 0, 20, 20, 20, 0, 0, 0)


def test_constant_acceleration():
    n = 101
    t = np.arange(n) * DT
    v = t.copy()
    x = 0.5 * t**2
    gap = np.full(n, 30.0)
    pair = CarFollowingPair.from_arrays(1, 2, x, v, np.ones(n), x + 34.5, v, np.ones(n), gap)
    f = extract_features(pair, window=10.0)
    assert (f.x4_max_accel, f.x5_min_accel, f.x6_mean_accel, f.x7_std_accel) == (1.0, 1.0, 1.0, 0.0)


def test_window_longer_than_episode():
    with pytest.raises(DataError):
        extract_features(constant_pair(100), window=15.0)


def test_undefined_gap():
    with pytest.raises(DataError):
        features_from_arrays([1.0, 2.0], [0.0, 0.0], [5.0, np.nan], [1.0, 2.0])


def test_speed_difference_is_leader_minus_follower():
    f = features_from_arrays([10.0, 10.0], [0.0, 0.0], [5.0, 5.0], [12.0, 12.0])
    assert f.x12_mean_speed_diff == 2.0


def test_single_sample_has_zero_spread():
    f = features_from_arrays([10.0], [0.3], [5.0], [11.0])
    assert f.x3_std_speed == f.x7_std_accel == f.x11_std_gap == f.x13_std_speed_diff == 0.0


def test_two_point_std():
    f = features_from_arrays([3.0, 7.0], [0.0, 0.0], [5.0, 5.0], [3.0, 7.0])
    assert f.x3_std_speed == pytest.approx(4.0 / np.sqrt(2))


def _kinematics(n):
    return st.tuples(
        arrays(np.float64, n, elements=st.floats(0, 40)),
        arrays(np.float64, n, elements=st.floats(-5, 5)),
        arrays(np.float64, n, elements=st.floats(0.1, 200)),
        arrays(np.float64, n, elements=st.floats(0, 40)),
    )


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40).flatmap(_kinematics))
def test_invariants_hold(k):
    f = features_from_arrays(*k)
    tol = 1e-9
    assert f.x1_max_speed + tol >= f.x2_mean_speed >= -tol and f.x3_std_speed >= 0
    assert f.x4_max_accel + tol >= f.x6_mean_accel >= f.x5_min_accel - tol and f.x7_std_accel >= 0
    assert f.x8_max_gap + tol >= f.x10_mean_gap >= f.x9_min_gap - tol and f.x9_min_gap > 0
    assert f.x11_std_gap >= 0 and f.x13_std_speed_diff >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30).flatmap(_kinematics), st.floats(0.1, 10))
def test_speed_scaling(k, c):
    v, a, gap, vl = k
    f = features_from_arrays(v, a, gap, vl).to_array()
    g = features_from_arrays(c * v, a, gap, c * vl).to_array()
    speed = [0, 1, 2, 11, 12]
    assert np.allclose(g[speed], c * f[speed], rtol=1e-9, atol=1e-9)
    assert np.array_equal(g[3:11], f[3:11])


def test_time_shift_invariance(corpus):
    p = corpus[0][0]
    shifted = CarFollowingPair.from_arrays(p.follower_id, p.leader_id, p.x, p.v, p.a, p.x_leader, p.v_leader,
                                           p.a_leader, p.gap, start_frame=p.start_frame + 12345)
    assert extract_features(p) == extract_features(shifted)


def test_corpus_features_satisfy_invariants(corpus):
    X = FeatureExtractor().transform(corpus[0])
    assert X.shape == (30, 13)
    assert np.all(X[:, 0] >= X[:, 1]) and np.all(X[:, 7] >= X[:, 9]) and np.all(X[:, 8] > 0)
    s = fit_standardizer(X)
    assert np.all(np.isfinite(s.mean_)) and np.all(s.scale_ > 0)


def test_standardizer_two_points():
    s = fit_standardizer([np.zeros(13), np.full(13, 2.0)])
    assert np.allclose(s.mean_, 1.0)
    assert np.allclose(s.scale_, np.sqrt(2.0))


def test_standardizer_zero_variance_names_dimension():
    X = np.random.default_rng(0).normal(size=(5, 13))
    X[:, 4] = 1.0
    with pytest.raises(DataError, match="X5"):
        Standardizer().fit(X)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 13), elements=st.floats(-1e3, 1e3)))
def test_standardized_moments(X):
    if np.any(X.std(axis=0, ddof=1) < 1e-3):
        return
    s = Standardizer().fit(X)
    Z = s.transform(X)
    assert np.allclose(Z.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(Z.std(axis=0, ddof=1), 1, atol=1e-12)


def test_standardize_round_trip():
    X = np.random.default_rng(1).normal(3, 2, size=(20, 13))
    s = fit_standardizer(X)
    assert np.allclose(standardize(s, s.mean_), 0)
    assert np.allclose(standardize(s, s.mean_ + s.scale_), 1)
    f = X[3] + 0.7
    assert np.allclose(unstandardize(s, standardize(s, f)), f, atol=1e-12)


def test_feature_csv_round_trip(tmp_path):
    X = np.random.default_rng(2).normal(size=(4, 13))
    write_feature_csv(tmp_path / "f.csv", X)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == ",".join(FEATURE_SYMBOLS)
    assert np.array_equal(read_feature_csv(tmp_path / "f.csv"), X)


def _flip_speed_difference(X):
    Y = X.copy()
    Y[:, 11] = -Y[:, 11]
    return Y


def test_speed_difference_sign_does_not_change_clusters(corpus):
    X = FeatureExtractor().transform(corpus[0])
    labels = []
    for M in (X, _flip_speed_difference(X)):
        P = PCA(2).fit_transform(Standardizer().fit_transform(M))
        labels.append(KMeans(3).fit(P).labels_)
    # Same partition up to a relabelling.
    pairs = {(int(a), int(b)) for a, b in zip(*labels)}
    assert len(pairs) == 3
