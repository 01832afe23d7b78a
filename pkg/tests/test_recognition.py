import numpy as np
import pytest

from drivestyle.data import DT, CarFollowingPair
from drivestyle.exceptions import DataError
from drivestyle.idm import REFERENCE_PROTOTYPES, REFERENCE_AGGREGATE, IdmParams, leader_offset, simulate
from drivestyle.recognition import (
    ObservationWindow, StyleLibrary, accumulate, likelihood_scores, predict_trajectory, recognize_m1,
    recognize_m2,
)
from drivestyle.synth import make_pair

from conftest import constant_pair, library_from


@pytest.fixture(scope="module")
def lib(corpus):
    return library_from(corpus[0], REFERENCE_PROTOTYPES)


def _window(pair, t_dur):
    return ObservationWindow.from_pair(pair, t_dur)


def test_window_validation():
    with pytest.raises(DataError):
        ObservationWindow([0.0, 0.1], [0.0], [1.0, 1.0], [0.0, 0.0], [5.0, 5.0], [1.0, 1.0], [5.0, 5.0])
    with pytest.raises(DataError, match="contiguous"):
        ObservationWindow(*([0.0, 0.3],) * 7)
    w = ObservationWindow.empty()
    assert w.n == 0 and w.t_dur == 0.0


def test_from_pair_copies_and_length(corpus):
    p = corpus[0][0]
    w = _window(p, 2.0)
    assert w.n == 20 and w.t_dur == pytest.approx(2.0)
    w.v[0] = -99.0
    assert p.v[0] != -99.0
    with pytest.raises(DataError):
        _window(p, 30.0)
    with pytest.raises(DataError):
        _window(p, 0.0)


def _poisoned(p, n):
    """``p`` with every frame from index ``n`` on replaced by garbage."""
    fields = [f.copy() for f in (p.x, p.v, p.a, p.x_leader, p.v_leader, p.a_leader, p.gap)]
    for f in fields:
        f[n:] = 1e6 + np.arange(len(f) - n)
    return CarFollowingPair.from_arrays(p.follower_id, p.leader_id, *fields, start_frame=p.start_frame)


def test_future_frames_cannot_influence_recognition(lib, corpus):
    for p in corpus[0][:6]:
        for t_dur in (0.5, 2.0, 5.0):
            n = int(round(t_dur / DT))
            clean, dirty = _window(p, t_dur), _window(_poisoned(p, n), t_dur)
            assert clean == dirty
            assert recognize_m2(lib, clean) == recognize_m2(lib, dirty)
            assert recognize_m1(lib, clean) == recognize_m1(lib, dirty)


def test_accumulate(corpus):
    p = corpus[0][0]
    one = ObservationWindow(*(np.atleast_1d(getattr(_window(p, 0.1), f)) for f in
                              ("t", "x", "v", "a", "x_leader", "v_leader", "gap")))
    grown = accumulate(ObservationWindow.empty(), one)
    assert grown.t_dur == pytest.approx(0.1)
    full = _window(p, 2.0)
    first = ObservationWindow(*(getattr(full, f)[:10] for f in ("t", "x", "v", "a", "x_leader", "v_leader", "gap")))
    second = ObservationWindow(*(getattr(full, f)[10:] for f in ("t", "x", "v", "a", "x_leader", "v_leader", "gap")))
    assert accumulate(first, second) == full
    assert accumulate(first, second).n == 20
    with pytest.raises(DataError):
        accumulate(first, first)
    with pytest.raises(DataError):
        accumulate(first, ObservationWindow(*(a[5:] for a in (second.t, second.x, second.v, second.a,
                                                                 second.x_leader, second.v_leader, second.gap))))


def test_grown_window_recognizes_like_fresh_window(lib, corpus):
    p = corpus[0][3]
    w = ObservationWindow.empty()
    fields = ("t", "x", "v", "a", "x_leader", "v_leader", "gap")
    full = _window(p, 3.0)
    for i in range(full.n):
        w = accumulate(w, ObservationWindow(*(getattr(full, f)[i:i + 1] for f in fields)))
        fresh = _window(p, (i + 1) * DT)
        assert w == fresh
        assert recognize_m2(lib, w) == recognize_m2(lib, fresh)


def test_m2_recovers_noise_free_prototype(lib):
    rng = np.random.default_rng(11)
    for k, params in REFERENCE_PROTOTYPES.items():
        for _ in range(3):
            pair = make_pair(params, rng, n_frames=60, noise=0.0, gap_scale=rng.uniform(0.6, 1.4))
            out = recognize_m2(lib, _window(pair, 2.0))
            assert out.cluster == k
            assert out.params == params
            # Zero residual: the score is the normalizing constant alone.
            assert out.score == pytest.approx(-20 * np.log(np.sqrt(2 * np.pi) * 0.15), rel=1e-9)


def test_m2_single_sample(lib, corpus):
    out = recognize_m2(lib, _window(corpus[0][0], 0.1))
    assert out.cluster in (0, 1, 2) and len(out.per_cluster_scores) == 3


def test_m2_argmax_independent_of_sigma(lib):
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        t = np.arange(n) * DT
        v, vl = rng.uniform(0, 30, n), rng.uniform(0, 30, n)
        gap = rng.uniform(1, 80, n)
        w = ObservationWindow(t, np.zeros(n), v, rng.normal(0, 1, n), np.zeros(n), vl, gap)
        picks = {recognize_m2(lib, w, s).cluster for s in (0.05, 0.15, 0.5, 3.0)}
        assert len(picks) == 1


def test_m2_tie_goes_to_lowest_index(corpus):
    # Standstill far from the leader: every prototype predicts exactly a_max = 0.4.
    protos = {0: IdmParams(35.0, 1.0, 0.1, 0.4, 1.5), 1: IdmParams(18.5, 1.9, 4.5, 0.4, 1.4),
              2: IdmParams(20.0, 1.5, 1.0, 0.4, 1.0)}
    lib = library_from(corpus[0], protos)
    n = 10
    w = ObservationWindow(np.arange(n) * DT, np.zeros(n), np.zeros(n), np.full(n, 0.1), np.full(n, 1e12),
                          np.zeros(n), np.full(n, 1e12))
    scores = likelihood_scores(lib, w, 0.15)
    assert scores[0] == scores[1] == scores[2]
    assert recognize_m2(lib, w).cluster == 0


def test_m2_rejects_bad_input(lib, corpus):
    with pytest.raises(DataError):
        recognize_m2(lib, ObservationWindow.empty())
    with pytest.raises(ValueError):
        recognize_m2(lib, _window(corpus[0][0], 1.0), sigma=0.0)


def test_m1_reproduces_training_assignments(lib, corpus):
    # A 15 s window of a training pair has exactly that pair's offline features.
    for p, label in zip(corpus[0], lib.kmeans.labels_):
        assert recognize_m1(lib, _window(p, 15.0)).cluster == label


def test_m1_time_shift_invariance(lib, corpus):
    p = corpus[0][5]
    w = _window(p, 4.0)
    shifted = ObservationWindow(w.t + 321.0, w.x + 50.0, w.v, w.a, w.x_leader + 50.0, w.v_leader, w.gap)
    assert recognize_m1(lib, w) == recognize_m1(lib, shifted)


def test_m1_single_sample(lib):
    w = ObservationWindow([0.0], [0.0], [10.0], [0.0], [30.0], [10.0], [25.5])
    out = recognize_m1(lib, w)
    assert min(out.per_cluster_scores) == out.score


def test_predict_trajectory_delegates_to_simulator(lib, corpus):
    p = corpus[0][1]
    out = recognize_m2(lib, _window(p, 2.0))
    i = 19
    off = leader_offset(p, i)
    res = predict_trajectory(out, p.x[i], p.v[i], p.x_leader[i:], p.v_leader[i:], off, observed=p.x[i:])
    sim = simulate(out.params, p.x[i], p.v[i], p.x_leader[i:], p.v_leader[i:], off)
    assert np.array_equal(res.predicted_positions, sim.x[[10, 20, 30, 40, 50]])
    assert res.rmse == pytest.approx(np.sqrt(np.mean((res.predicted_positions - p.x[i + 10:i + 51:10]) ** 2)))
    blind = predict_trajectory(REFERENCE_AGGREGATE, p.x[i], p.v[i], p.x_leader[i:], p.v_leader[i:], off)
    assert np.isnan(blind.rmse)


def test_predict_trajectory_at_equilibrium():
    params = REFERENCE_PROTOTYPES[0]
    from drivestyle.idm import equilibrium_gap

    gap = equilibrium_gap(params, 10.0)
    p = constant_pair(60, v=10.0, gap=gap)
    res = predict_trajectory(params, 0.0, 10.0, p.x_leader, p.v_leader, 4.5, observed=p.x)
    assert res.rmse < 1e-6 and not res.collision


def test_library_json_round_trip(lib, tmp_path):
    lib.save(tmp_path / "lib.json")
    back = StyleLibrary.load(tmp_path / "lib.json")
    assert back.to_json() == lib.to_json()
    assert back.prototypes == lib.prototypes
    w = ObservationWindow([0.0, 0.1], [0, 1.0], [10, 10.0], [0, 0.0], [30, 31.0], [10, 10.0], [25.5, 25.5])
    assert recognize_m1(back, w) == recognize_m1(lib, w)


def test_library_validation(lib, tmp_path):
    with pytest.raises(DataError):
        StyleLibrary(lib.standardizer, lib.pca, lib.kmeans, {0: lib.prototypes[0]}, lib.styles)
    with pytest.raises(DataError):
        StyleLibrary(lib.standardizer, lib.pca, lib.kmeans, lib.prototypes, lib.styles, sigma_default=0.6)
    (tmp_path / "bad.json").write_text('{"schema": "x"}')
    with pytest.raises(DataError):
        StyleLibrary.load(tmp_path / "bad.json")
