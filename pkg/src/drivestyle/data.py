"""Trajectory ingestion and car-following pair extraction.

Positions are longitudinal along-lane coordinates of the front bumper. The
gap stored on a sample is the net (bumper-to-bumper) distance to the leader,
so for a consistent dataset ``leader.position - leader_length - follower.position
== gap``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError, RecordError

DT = 0.1
FEET_TO_METERS = 0.3048
PAIRS_SCHEMA = "drivestyle.pairs/1"

# Column layout of the NGSIM / reconstructed-NGSIM text files.
NGSIM_COLUMNS = {
    "vehicle_id": "Vehicle_ID",
    "frame": "Frame_ID",
    "position": "Local_Y",
    "length": "v_Length",
    "speed": "v_Vel",
    "acceleration": "v_Acc",
    "lane_id": "Lane_ID",
    "leader_id": "Preceding",
    "space_headway": "Space_Headway",
}
NGSIM_COLUMN_INDEX = {
    "vehicle_id": 0,
    "frame": 1,
    "position": 5,
    "length": 8,
    "speed": 11,
    "acceleration": 12,
    "lane_id": 13,
    "leader_id": 14,
    "space_headway": 16,
}
REQUIRED_FIELDS = ("vehicle_id", "frame", "position", "speed", "lane_id", "leader_id", "space_headway")
OPTIONAL_FIELDS = ("acceleration", "length")


@dataclass(frozen=True, slots=True)
class TrajectorySample:
    """One 10 Hz observation of a vehicle."""

    vehicle_id: int
    frame: int
    position: float
    speed: float
    acceleration: float
    lane_id: int
    leader_id: int | None = None
    gap: float = math.nan

    def __post_init__(self):
        if not self.speed >= 0:
            raise DataError(f"vehicle {self.vehicle_id} frame {self.frame}: negative speed {self.speed}")
        if self.leader_id is not None and not self.gap > 0:
            raise DataError(f"vehicle {self.vehicle_id} frame {self.frame}: non-positive gap {self.gap}")

    @property
    def frame_time(self) -> float:
        return self.frame * DT


@dataclass(frozen=True)
class CarFollowingPair:
    """A maximal leader-follower episode in one lane with no interference."""

    follower_id: int
    leader_id: int
    follower: tuple[TrajectorySample, ...]
    leader: tuple[TrajectorySample, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.follower) != len(self.leader) or not self.follower:
            raise DataError("follower and leader tracks must be non-empty and aligned")

    @property
    def start_frame(self) -> int:
        return self.follower[0].frame

    @property
    def lane_id(self) -> int:
        return self.follower[0].lane_id

    @property
    def n_samples(self) -> int:
        return len(self.follower)

    @property
    def duration(self) -> float:
        return self.n_samples * DT

    @property
    def key(self) -> tuple[int, int]:
        return (self.follower_id, self.start_frame)

    @cached_property
    def t(self) -> np.ndarray:
        return np.arange(self.n_samples) * DT

    @cached_property
    def x(self) -> np.ndarray:
        return np.array([s.position for s in self.follower])

    @cached_property
    def v(self) -> np.ndarray:
        return np.array([s.speed for s in self.follower])

    @cached_property
    def a(self) -> np.ndarray:
        return np.array([s.acceleration for s in self.follower])

    @cached_property
    def x_leader(self) -> np.ndarray:
        return np.array([s.position for s in self.leader])

    @cached_property
    def v_leader(self) -> np.ndarray:
        return np.array([s.speed for s in self.leader])

    @cached_property
    def a_leader(self) -> np.ndarray:
        return np.array([s.acceleration for s in self.leader])

    @cached_property
    def gap(self) -> np.ndarray:
        return np.array([s.gap for s in self.follower])

    def samples(self) -> list[TrajectorySample]:
        return list(self.follower) + list(self.leader)

    @classmethod
    def from_arrays(
        cls,
        follower_id,
        leader_id,
        x,
        v,
        a,
        x_leader,
        v_leader,
        a_leader,
        gap,
        lane_id=1,
        start_frame=0,
    ) -> "CarFollowingPair":
        """Build a pair from per-frame arrays (used by the synthetic generator and JSON I/O)."""
        n = len(x)
        follower = tuple(
            TrajectorySample(follower_id, start_frame + i, float(x[i]), float(v[i]), float(a[i]),
                             lane_id, leader_id, float(gap[i]))
            for i in range(n)
        )
        leader = tuple(
            TrajectorySample(leader_id, start_frame + i, float(x_leader[i]), float(v_leader[i]),
                             float(a_leader[i]), lane_id, None)
            for i in range(n)
        )
        return cls(follower_id, leader_id, follower, leader)


@dataclass(frozen=True)
class DatasetSplit:
    offline_pairs: list[CarFollowingPair]
    online_pairs: list[CarFollowingPair]
    seed: int


@dataclass
class LoaderConfig:
    """How to read a delimiter-separated trajectory file.

    ``columns`` maps semantic field names to column names (header files) or
    zero-based indices. ``units`` is "feet" or "meters"; ``lanes`` optionally
    restricts the retained lanes.
    """

    columns: dict = field(default_factory=lambda: dict(NGSIM_COLUMNS))
    delimiter: str = "auto"
    header: bool | None = None
    units: str = "feet"
    lanes: list[int] | None = None

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "LoaderConfig":
        d = dict(d or {})
        unknown = set(d) - {"columns", "delimiter", "header", "units", "lanes"}
        if unknown:
            raise ConfigError(f"unknown data config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.units not in ("feet", "meters"):
            raise ConfigError(f"units must be 'feet' or 'meters', got {cfg.units!r}")
        return cfg


def _sniff(path: Path, cfg: LoaderConfig) -> tuple[str, bool]:
    with open(path) as fh:
        first = fh.readline()
    delim = cfg.delimiter
    if delim == "auto":
        delim = "," if "," in first else "whitespace"
    header = cfg.header
    if header is None:
        tokens = first.split(",") if delim == "," else first.split()
        try:
            float(tokens[0])
            header = False
        except (ValueError, IndexError):
            header = True
    return delim, header


def load_trajectories(source, config: LoaderConfig | Mapping | None = None) -> list[TrajectorySample]:
    """Read a tabular trajectory file into SI-unit samples sorted by (vehicle, frame)."""
    cfg = config if isinstance(config, LoaderConfig) else LoaderConfig.from_dict(config)
    path = Path(source)
    if not path.exists():
        raise DataError(f"trajectory file not found: {path}")
    delim, header = _sniff(path, cfg)
    sep = "," if delim == "," else r"\s+"
    raw = pd.read_csv(path, sep=sep, header=0 if header else None, dtype=str)
    first_line = 2 if header else 1

    columns = cfg.columns
    if not header and columns == NGSIM_COLUMNS:
        columns = NGSIM_COLUMN_INDEX
    missing = [f for f in REQUIRED_FIELDS if f not in columns]
    if missing:
        raise ConfigError(f"column mapping lacks required fields: {missing}")

    cols = {}
    for name, ref in columns.items():
        if isinstance(ref, int) or (isinstance(ref, str) and ref.isdigit() and not header):
            idx = int(ref)
            if idx >= raw.shape[1]:
                raise ConfigError(f"column index {idx} for {name!r} out of range ({raw.shape[1]} columns)")
            cols[name] = raw.iloc[:, idx]
        elif ref in raw.columns:
            cols[name] = raw[ref]
        elif name in REQUIRED_FIELDS:
            raise ConfigError(f"required column {ref!r} ({name}) not found in {path.name}")

    num = {}
    for name, col in cols.items():
        values = pd.to_numeric(col.str.strip(), errors="coerce")
        bad = values.isna()
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise RecordError(f"malformed {name} value {col.iloc[i]!r}", line=first_line + i)
        num[name] = values.to_numpy(dtype=float)

    scale = FEET_TO_METERS if cfg.units == "feet" else 1.0
    speed = num["speed"] * scale
    neg = np.flatnonzero(speed < 0)
    if neg.size:
        raise RecordError(f"negative speed {num['speed'][neg[0]]}", line=first_line + int(neg[0]))

    df = pd.DataFrame({
        "vehicle_id": num["vehicle_id"].astype(np.int64),
        "frame": num["frame"].astype(np.int64),
        "position": num["position"] * scale,
        "speed": speed,
        "lane_id": num["lane_id"].astype(np.int64),
        "leader_id": num["leader_id"].astype(np.int64),
        "headway": num["space_headway"] * scale,
        "line": np.arange(len(speed)) + first_line,
    })
    if "acceleration" in num:
        df["acceleration"] = num["acceleration"] * scale
    dup = df.duplicated(["vehicle_id", "frame"])
    if dup.any():
        row = df[dup].iloc[0]
        raise RecordError(f"duplicate frame {row.frame} for vehicle {row.vehicle_id}", line=int(row.line))
    df = df.sort_values(["vehicle_id", "frame"], kind="stable").reset_index(drop=True)

    if "acceleration" not in df:
        df["acceleration"] = _finite_difference_accel(df)

    # Net gap: subtract the leader's length when lengths are known.
    if "length" in num:
        lengths = pd.Series(num["length"] * scale).groupby(num["vehicle_id"].astype(np.int64)).first()
        leader_len = df["leader_id"].map(lengths)
        df["gap"] = df["headway"] - leader_len.fillna(0.0)
    else:
        df["gap"] = df["headway"]

    if cfg.lanes is not None:
        df = df[df["lane_id"].isin(list(cfg.lanes))]

    out = []
    for vid, frame, pos, spd, acc, lane, lid, gap in zip(
        df["vehicle_id"].to_numpy(), df["frame"].to_numpy(), df["position"].to_numpy(),
        df["speed"].to_numpy(), df["acceleration"].to_numpy(), df["lane_id"].to_numpy(),
        df["leader_id"].to_numpy(), df["gap"].to_numpy(),
    ):
        # A leader id with a non-positive gap is unusable; the frame keeps no leader.
        leader = int(lid) if lid > 0 and gap > 0 else None
        out.append(TrajectorySample(int(vid), int(frame), float(pos), float(spd), float(acc),
                                    int(lane), leader, float(gap) if leader is not None else math.nan))
    return out


def _finite_difference_accel(df: pd.DataFrame) -> np.ndarray:
    acc = np.zeros(len(df))
    frames = df["frame"].to_numpy()
    speed = df["speed"].to_numpy()
    vid = df["vehicle_id"].to_numpy()
    breaks = np.flatnonzero((np.diff(vid) != 0) | (np.diff(frames) != 1)) + 1
    for seg in np.split(np.arange(len(df)), breaks):
        if len(seg) >= 2:
            acc[seg] = np.gradient(speed[seg], DT)
    return acc


def extract_pairs(samples: Iterable[TrajectorySample], min_duration: float = 15.0) -> list[CarFollowingPair]:
    """Return every maximal car-following episode lasting at least ``min_duration`` seconds.

    A frame continues an episode when the follower reports the same leader,
    both vehicles are in the episode's lane, the follower is behind the
    leader and the frame immediately follows the previous one.
    """
    by_vehicle: dict[int, dict[int, TrajectorySample]] = {}
    for s in samples:
        by_vehicle.setdefault(s.vehicle_id, {})[s.frame] = s
    min_n = int(math.ceil(min_duration / DT - 1e-9))

    pairs = []
    for vid in sorted(by_vehicle):
        track = by_vehicle[vid]
        run_f: list[TrajectorySample] = []
        run_l: list[TrajectorySample] = []

        def flush():
            if len(run_f) >= min_n:
                pairs.append(CarFollowingPair(vid, run_f[0].leader_id, tuple(run_f), tuple(run_l)))

        for frame in sorted(track):
            s = track[frame]
            lead = by_vehicle.get(s.leader_id, {}).get(frame) if s.leader_id is not None else None
            ok = lead is not None and lead.lane_id == s.lane_id and lead.position > s.position
            if ok and run_f and (s.leader_id == run_f[-1].leader_id and s.lane_id == run_f[-1].lane_id
                                 and frame == run_f[-1].frame + 1):
                run_f.append(s)
                run_l.append(lead)
                continue
            flush()
            run_f, run_l = ([s], [lead]) if ok else ([], [])
        flush()
    return pairs


def split_dataset(pairs: Sequence[CarFollowingPair], fraction: float = 0.8, seed: int = 0,
                  strategy: str = "random") -> DatasetSplit:
    """Partition pairs into offline (``floor(fraction * n)``) and online sets.

    ``strategy="random"`` shuffles with ``seed``; ``"ordered"`` takes the
    leading pairs. Each side keeps the input order.
    """
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n = len(pairs)
    if n < 2:
        raise DataError(f"need at least 2 pairs to split, got {n}")
    n_off = int(math.floor(fraction * n + 1e-9))
    if n_off == 0 or n_off == n:
        raise DataError(f"split of {n} pairs at fraction {fraction} leaves one side empty")
    if strategy == "random":
        order = np.random.default_rng(seed).permutation(n)
    elif strategy == "ordered":
        order = np.arange(n)
    else:
        raise ConfigError(f"unknown split strategy {strategy!r}")
    off = np.sort(order[:n_off])
    on = np.sort(order[n_off:])
    return DatasetSplit([pairs[i] for i in off], [pairs[i] for i in on], seed)


def _opt(x):
    return None if x is None else int(x)


def pairs_to_json(pairs: Sequence[CarFollowingPair]) -> dict:
    out = []
    for p in pairs:
        out.append({
            "follower_id": p.follower_id,
            "leader_id": p.leader_id,
            "lane_id": p.lane_id,
            "start_frame": p.start_frame,
            "duration": round(p.duration, 10),
            "follower": {
                "position": p.x.tolist(),
                "speed": p.v.tolist(),
                "acceleration": p.a.tolist(),
                "gap": p.gap.tolist(),
            },
            "leader": {
                "position": p.x_leader.tolist(),
                "speed": p.v_leader.tolist(),
                "acceleration": p.a_leader.tolist(),
                "leader_id": [_opt(s.leader_id) for s in p.leader],
                "gap": [None if s.leader_id is None else s.gap for s in p.leader],
            },
        })
    return {"schema": PAIRS_SCHEMA, "dt": DT, "units": "SI", "pairs": out}


def pairs_from_json(doc: Mapping) -> list[CarFollowingPair]:
    if doc.get("schema") != PAIRS_SCHEMA:
        raise DataError(f"not a pairs document (schema {doc.get('schema')!r})")
    pairs = []
    for rec in doc["pairs"]:
        f, l = rec["follower"], rec["leader"]
        fid, lid, lane, start = rec["follower_id"], rec["leader_id"], rec["lane_id"], rec["start_frame"]
        follower = tuple(
            TrajectorySample(fid, start + i, x, v, a, lane, lid, g)
            for i, (x, v, a, g) in enumerate(zip(f["position"], f["speed"], f["acceleration"], f["gap"]))
        )
        leader = tuple(
            TrajectorySample(lid, start + i, x, v, a, lane, ll, math.nan if g is None else g)
            for i, (x, v, a, ll, g) in enumerate(zip(l["position"], l["speed"], l["acceleration"],
                                                     l["leader_id"], l["gap"]))
        )
        pairs.append(CarFollowingPair(fid, lid, follower, leader))
    return pairs


def save_pairs(pairs: Sequence[CarFollowingPair], path) -> None:
    Path(path).write_text(json.dumps(pairs_to_json(pairs)))


def load_pairs(path) -> list[CarFollowingPair]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read pairs file {path}: {exc}") from exc
    return pairs_from_json(doc)
