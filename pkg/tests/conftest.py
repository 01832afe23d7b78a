import json

import numpy as np
import pytest

from drivestyle.config import PipelineConfig
from drivestyle.data import DT, CarFollowingPair
from drivestyle.synth import make_corpus, write_trajectory_csv

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.skipped:
        _ACCEPTANCE[number] = ("SKIPPED", title)
    elif rep.failed:
        _ACCEPTANCE[number] = ("FAIL", title)
    elif rep.when == "call":
        _ACCEPTANCE[number] = ("PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, (status, title) in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {number}: {status:<7} {title}")


def constant_pair(n=200, v=10.0, gap=20.0, length=4.5, follower_id=1, leader_id=2, lane_id=1, start_frame=0):
    """Follower and leader cruising at the same constant speed."""
    t = np.arange(n) * DT
    x = v * t
    xl = x + gap + length
    vv = np.full(n, v)
    zero = np.zeros(n)
    return CarFollowingPair.from_arrays(follower_id, leader_id, x, vv, zero, xl, vv, zero, np.full(n, gap),
                                        lane_id=lane_id, start_frame=start_frame)


def write_ngsim(path, rows, header=True):
    cols = ["Vehicle_ID", "Frame_ID", "Local_Y", "v_Length", "v_Vel", "v_Acc", "Lane_ID", "Preceding",
            "Space_Headway"]
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")
    return path


def two_vehicle_rows(seconds=20.0, lane_change_at=None, v=10.0, gap=15.0, length=4.5):
    """NGSIM rows (meters) for a follower behind a leader; optional follower lane change."""
    rows = []
    n = int(round(seconds / DT))
    for i in range(n):
        xf = v * i * DT
        lane = 2 if lane_change_at is not None and i * DT >= lane_change_at else 1
        lead = 2 if lane == 1 else 0
        rows.append((1, i + 1, xf, length, v, 0.0, lane, lead, gap + length if lead else 0.0))
        rows.append((2, i + 1, xf + gap + length, length, v, 0.0, 1, 0, 0.0))
    return rows


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, corpus):
    d = tmp_path_factory.mktemp("corpus")
    pairs, labels = corpus
    write_trajectory_csv(pairs, d / "trajectories.csv")
    (d / "config.json").write_text(json.dumps({"data": {"path": "trajectories.csv", "units": "meters"}}))
    (d / "labels.json").write_text(json.dumps({str(p.follower_id): k for p, k in zip(pairs, labels)}))
    return d


@pytest.fixture(scope="session")
def corpus_config(corpus_dir):
    cfg = PipelineConfig.from_dict({"data": {"path": str(corpus_dir / "trajectories.csv"), "units": "meters"}})
    return cfg


@pytest.fixture(scope="session")
def offline(corpus_config):
    from drivestyle.benchmark import run_offline

    return run_offline(corpus_config)


@pytest.fixture(scope="session")
def planted(corpus):
    pairs, labels = corpus
    return {p.follower_id: k for p, k in zip(pairs, labels)}


def library_from(pairs, prototypes, styles=None, k=None):
    """A style library whose clustering comes from ``pairs`` and whose prototypes are given."""
    from drivestyle.features import FeatureExtractor, Standardizer
    from drivestyle.recognition import StyleLibrary
    from drivestyle.style_learning import PCA, KMeans

    X = FeatureExtractor().transform(pairs)
    st = Standardizer().fit(X)
    pca = PCA(2).fit(st.transform(X))
    km = KMeans(k or len(prototypes), random_state=0).fit(pca.transform(st.transform(X)))
    styles = styles or {j: f"style {j}" for j in prototypes}
    return StyleLibrary(st, pca, km, dict(prototypes), styles)
