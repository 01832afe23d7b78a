"""Synthetic car-following corpus with planted driving styles.

Leaders follow a smooth random speed profile; each follower obeys IDM with
one planted parameter set plus iid Gaussian acceleration noise whose level
is part of the style. The applied (noisy) acceleration is what gets
recorded, so zero noise reproduces the integrator exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import DT, CarFollowingPair
from .idm import IdmParams, acceleration, equilibrium_gap

VEHICLE_LENGTH = 4.5
# Planted styles: neutral, relatively aggressive, timid. The reference
# neutral/aggressive prototypes differ only in standstill gap and are too
# close to separate in feature space, so the aggressive one here is sharper.
SYNTH_STYLES = {
    0: IdmParams(34.7, 1.0, 2.9, 0.5, 1.5),
    1: IdmParams(35.0, 0.6, 0.5, 1.5, 2.0),
    2: IdmParams(18.5, 1.9, 4.5, 0.4, 1.4),
}
# Gap features order the styles aggressive < neutral < timid; a quiet neutral
# style keeps the noise features from lining up with them, so the three
# styles span both retained components.
SYNTH_NOISE = {0: 0.03, 1: 0.25, 2: 0.25}
CSV_HEADER = ("Vehicle_ID", "Frame_ID", "Local_Y", "v_Length", "v_Vel", "v_Acc", "Lane_ID",
              "Preceding", "Space_Headway")


def leader_profile(rng, n: int, v0: float | None = None, event_after: float | None = 15.0):
    """Leader kinematics (position, speed, acceleration arrays) over ``n`` frames.

    A smooth random speed profile, plus one brake-and-recover manoeuvre
    starting within 0.5-2 s after ``event_after`` seconds when the pair is
    long enough. The manoeuvre gives calibration transient dynamics to fit
    while leaving the first ``event_after`` seconds quiet.
    """
    v0 = rng.uniform(9.0, 11.0) if v0 is None else v0
    t = np.arange(n) * DT
    amp = rng.uniform(0.05, 0.15, size=2)
    period = rng.uniform(8.0, 20.0, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    a = (amp[:, None] * np.sin(2 * np.pi * t[None, :] / period[:, None] + phase[:, None])).sum(axis=0)
    if event_after is not None:
        start = event_after + rng.uniform(0.5, 2.0)
        brake, recover = rng.uniform(1.0, 2.0), rng.uniform(0.6, 1.0)
        a += np.where((t >= start) & (t < start + 2.0), -brake, 0.0)
        rec = start + 2.0
        a += np.where((t >= rec) & (t < rec + 2.0 * brake / recover), recover, 0.0)
    x = np.empty(n)
    v = np.empty(n)
    x[0], v[0] = 0.0, v0
    for i in range(n - 1):
        v[i + 1] = max(v[i] + a[i] * DT, 0.5)
        a[i] = (v[i + 1] - v[i]) / DT
        x[i + 1] = x[i] + (v[i] + v[i + 1]) * DT / 2
    return x, v, a


def follow(params: IdmParams, x_leader, v_leader, x0: float, v0: float, noise: float, rng,
           length: float = VEHICLE_LENGTH):
    """Integrate a noisy IDM follower; returns x, v, applied a and net gap."""
    n = len(x_leader)
    pv = params.as_array()
    x = np.empty(n)
    v = np.empty(n)
    a = np.empty(n)
    x[0], v[0] = x0, v0
    eps = rng.normal(0.0, noise, size=n) if noise > 0 else np.zeros(n)
    for i in range(n):
        d = x_leader[i] - length - x[i]
        a[i] = acceleration(pv, v[i], v_leader[i], max(d, 0.01)) + eps[i]
        if i + 1 < n:
            v[i + 1] = max(v[i] + a[i] * DT, 0.0)
            x[i + 1] = x[i] + (v[i] + v[i + 1]) * DT / 2
    return x, v, a, x_leader - length - x


def make_pair(params: IdmParams, rng, n_frames: int = 250, noise: float = 0.1, follower_id: int = 1,
              leader_id: int = 2, lane_id: int = 1, start_frame: int = 0, offset: float = 0.0,
              gap_scale: float = 1.0) -> CarFollowingPair:
    xl, vl, al = leader_profile(rng, n_frames)
    xl = xl + offset
    gap0 = gap_scale * equilibrium_gap(params, vl[0])
    x, v, a, gap = follow(params, xl, vl, xl[0] - VEHICLE_LENGTH - gap0, vl[0], noise, rng)
    return CarFollowingPair.from_arrays(follower_id, leader_id, x, v, a, xl, vl, al, gap,
                                        lane_id=lane_id, start_frame=start_frame)


def make_corpus(n_pairs: int = 30, proportions=(0.3, 0.5, 0.2), styles=None, noise=None,
                n_frames: int = 250, seed: int = 0):
    """Pairs with planted styles; returns ``(pairs, planted_labels)``.

    ``styles`` maps label to IdmParams (default :data:`SYNTH_STYLES`).
    ``noise`` is a per-label mapping, a single level for every style, or
    ``None`` for :data:`SYNTH_NOISE`.
    """
    styles = dict(SYNTH_STYLES if styles is None else styles)
    keys = sorted(styles)
    if noise is None:
        noise = SYNTH_NOISE
    if not isinstance(noise, dict):
        noise = {k: float(noise) for k in keys}
    counts = np.floor(np.asarray(proportions) * n_pairs + 1e-9).astype(int)
    counts[np.argmax(proportions)] += n_pairs - counts.sum()
    labels = np.repeat(keys, counts)
    rng = np.random.default_rng(seed)
    rng.shuffle(labels)
    pairs = []
    for i, k in enumerate(labels):
        k = int(k)
        pairs.append(make_pair(styles[k], rng, n_frames, noise[k], follower_id=2 * i + 1, leader_id=2 * i + 2,
                               lane_id=1 + i % 4, start_frame=1 + 7 * i, offset=2000.0 * i))
    return pairs, [int(k) for k in labels]


def write_trajectory_csv(pairs, path, length: float = VEHICLE_LENGTH) -> None:
    """NGSIM-style CSV in meters. Leaders report no preceding vehicle."""
    rows = []
    for p in pairs:
        for f, l in zip(p.follower, p.leader):
            rows.append((f.vehicle_id, f.frame, f.position, length, f.speed, f.acceleration, f.lane_id,
                         p.leader_id, f.gap + length))
            rows.append((l.vehicle_id, l.frame, l.position, length, l.speed, l.acceleration, l.lane_id, 0, 0.0))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), r[3], repr(r[4]), repr(r[5]), r[6], r[7], repr(r[8])])
