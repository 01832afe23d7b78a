"""Offline pipeline driver and online RMSE benchmark."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .calibration import PredictionWindows, mean_rmse, sensitivity
from .config import PipelineConfig
from .data import DT, CarFollowingPair, DatasetSplit, extract_pairs, load_trajectories, save_pairs, split_dataset
from .exceptions import ConfigError, DataError
from .features import write_feature_csv
from .idm import PARAM_NAMES
from .model import DrivingStyleModel
from .recognition import ObservationWindow, StyleLibrary, recognize_m1, recognize_m2
from .style_learning import PCA, KMeans

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1


class OfflineRun(NamedTuple):
    library: StyleLibrary
    report: dict
    split: DatasetSplit
    model: DrivingStyleModel


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def pairs_sha256(pairs: Sequence[CarFollowingPair]) -> str:
    h = hashlib.sha256()
    for p in pairs:
        h.update(repr(p.key).encode())
        for arr in (p.x, p.v, p.a, p.x_leader, p.v_leader, p.gap):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def write_csv(path, name: str, header: Sequence[str], rows) -> None:
    """CSV with a leading schema-version comment line; floats use repr for exact round-trips."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: drivestyle.{name}/{CSV_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv(path) -> tuple[str, list[dict]]:
    with open(path, newline="") as fh:
        schema = fh.readline().strip().removeprefix("# schema: ")
        return schema, list(csv.DictReader(fh))


def model_from_config(cfg: PipelineConfig) -> DrivingStyleModel:
    st, cal = cfg.styles, cfg.calibration
    return DrivingStyleModel(
        n_clusters=st.k, n_components=st.n_components, feature_window=cfg.features.window,
        standardize=st.standardize, n_init=st.restarts, k_range=(st.k_min, st.k_max),
        calibration_budget=cal.budget, n_starts=cal.n_starts, bounds=cal.bounds, anchor=cal.anchor,
        every_frame=cal.every_frame,
        style_overrides={int(k): v for k, v in st.style_overrides.items()} if st.style_overrides else None,
        sigma=cfg.recognition.sigma, random_state=cfg.seed, n_jobs=cfg.workers,
    )


def _proportions(labels, k) -> list[float]:
    counts = np.bincount(labels, minlength=k)
    return [float(c) / len(labels) for c in counts]


def learn_library(offline_pairs: Sequence[CarFollowingPair], cfg: PipelineConfig,
                  dataset_hash: str | None = None) -> tuple[DrivingStyleModel, dict]:
    """Fit the style model on offline pairs and build the offline report."""
    model = model_from_config(cfg).fit(offline_pairs)
    lib = model.library_
    k = cfg.styles.k
    ratios = model.pca_.explained_variance_ratio_
    lit_by_cluster, sens = {}, {}
    for c in range(k):
        members = [p for p, lab in zip(offline_pairs, model.labels_) if lab == c]
        lit_by_cluster[c] = mean_rmse(lib.baselines["lit"], members, cfg.calibration.anchor,
                                      cfg.calibration.every_frame)
        sens[str(c)] = sensitivity(lib.prototypes[c], members, anchor=cfg.calibration.anchor,
                                   every_frame=cfg.calibration.every_frame)

    # Sensitivity: the same clustering on unstandardized features.
    raw_p = PCA(cfg.styles.n_components).fit_transform(model.features_)
    raw_km = KMeans(k, n_init=cfg.styles.restarts, random_state=cfg.seed).fit(raw_p)

    lib.metadata = {
        "seed": cfg.seed,
        "k": k,
        "dataset_hash": dataset_hash or pairs_sha256(offline_pairs),
        "n_offline_pairs": len(offline_pairs),
    }
    report = {
        "pca": {
            "explained_variance_ratio": ratios.tolist(),
            "accumulated": np.cumsum(ratios).tolist(),
            "n_kept": cfg.styles.n_components,
            "kept_ratio": float(ratios[: cfg.styles.n_components].sum()),
        },
        "elbow": {"curve": [[int(kk), float(s)] for kk, s in model.elbow_], "elbow_k": model.elbow_k_, "k_used": k},
        "clusters": [
            {"cluster": c, "style": lib.styles[c], "size": int(np.sum(model.labels_ == c)),
             "proportion": _proportions(model.labels_, k)[c]}
            for c in range(k)
        ],
        "unstandardized_proportions": sorted(_proportions(raw_km.labels_, k), reverse=True),
        "params": {str(c): lib.prototypes[c].to_dict() for c in range(k)} | {
            "aggregate": lib.baselines["aggregate"].to_dict()},
        "calibration": {str(c): r.to_dict() for c, r in model.calibration_.items()} | {
            "aggregate": model.aggregate_.to_dict()},
        "lit_mean_rmse": {str(c): v for c, v in lit_by_cluster.items()},
        "sensitivity": sens,
        "metadata": lib.metadata,
    }
    return model, report


def run_offline(cfg: PipelineConfig, output_dir=None) -> OfflineRun:
    """Load -> extract pairs -> split -> learn styles -> calibrate; optionally write artifacts."""
    if not cfg.data.path:
        raise ConfigError("data.path (trajectory file) is required for the offline run")
    samples = load_trajectories(cfg.data.path, cfg.data.loader_dict())
    pairs = extract_pairs(samples, cfg.data.min_duration)
    log.info("extracted %d car-following pairs from %d samples", len(pairs), len(samples))
    split = split_dataset(pairs, cfg.data.split_fraction, cfg.seed, cfg.data.split_strategy)
    model, report = learn_library(split.offline_pairs, cfg, file_sha256(cfg.data.path))
    report["data"] = {"n_samples": len(samples), "n_pairs": len(pairs), "n_offline": len(split.offline_pairs),
                      "n_online": len(split.online_pairs)}
    report["metadata"]["n_pairs"] = len(pairs)
    if output_dir is not None:
        write_offline_artifacts(output_dir, model, report, split)
    return OfflineRun(model.library_, report, split, model)


def write_offline_artifacts(output_dir, model: DrivingStyleModel, report: dict, split: DatasetSplit | None) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.library_.save(out / "style_library.json")
    (out / "offline_report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    if split is not None:
        save_pairs(split.offline_pairs, out / "offline_pairs.json")
        save_pairs(split.online_pairs, out / "online_pairs.json")
    write_feature_csv(out / "features.csv", model.features_)
    ratios = report["pca"]["explained_variance_ratio"]
    write_csv(out / "pca.csv", "pca", ["component", "explained_variance_ratio", "accumulated"],
              [[f"PC{i + 1}", r, a] for i, (r, a) in enumerate(zip(ratios, report["pca"]["accumulated"]))])
    write_csv(out / "elbow.csv", "elbow", ["k", "sse"], report["elbow"]["curve"])
    write_csv(out / "clusters.csv", "clusters", ["cluster", "style", "size", "proportion"],
              [[c["cluster"], c["style"], c["size"], c["proportion"]] for c in report["clusters"]])
    proj = model.pca_.transform(model.standardizer_.transform(model.features_))
    write_csv(out / "projections.csv", "projections",
              ["pair", *(f"PC{i + 1}" for i in range(proj.shape[1])), "cluster"],
              [[i, *map(float, z), int(c)] for i, (z, c) in enumerate(zip(proj, model.labels_))])
    params = report["params"]
    write_csv(out / "params.csv", "params", ["cluster", *PARAM_NAMES],
              [[c, *(params[c][n] for n in PARAM_NAMES)] for c in params])
    (out / "calibration_report.txt").write_text(format_calibration_report(report))


def format_calibration_report(report: dict) -> str:
    lines = ["cluster      style                  " + "  ".join(f"{n:>9}" for n in PARAM_NAMES)
             + "  mean_rmse  lit_rmse  evals  bounds_hit"]
    styles = {str(c["cluster"]): c["style"] for c in report["clusters"]}
    for c, r in report["calibration"].items():
        p = r["params"]
        lit = report["lit_mean_rmse"].get(c)
        lines.append(f"{c:<12} {styles.get(c, '-'):<22} " + "  ".join(f"{p[n]:9.3f}" for n in PARAM_NAMES)
                     + f"  {r['objective_value']:9.4f}  {lit if lit is None else format(lit, '8.4f')!s:>8}"
                     + f"  {r['evaluations']:5d}  {','.join(r['bounds_hit']) or '-'}")
    return "\n".join(lines) + "\n"


def _eligible(pairs, t_durs, horizon=5.0):
    need = int(round(max(t_durs) / DT)) + int(round(horizon / DT))
    keep = [p for p in pairs if p.n_samples >= need]
    return keep, len(pairs) - len(keep)


def _mean(x) -> float:
    return math.fsum(x) / len(x) if len(x) else float("nan")


def _improvement(base, method) -> float:
    return (base - method) / base


def run_benchmark(lib: StyleLibrary, online_pairs: Sequence[CarFollowingPair], t_durs: Sequence[float],
                  sigma: float | None = None, every_frame: bool = False) -> dict:
    """Mean 5 s RMSE per method over the observation-duration grid.

    For each pair and ``t_dur`` the recognizers see only the first ``t_dur``
    seconds; the prediction starts at the last observed frame.
    """
    sigma = lib.sigma_default if sigma is None else sigma
    t_durs = sorted(float(t) for t in t_durs)
    pairs, excluded = _eligible(online_pairs, t_durs)
    if not pairs:
        raise DataError("no online pair supports the largest t_dur plus a 5 s prediction")
    curves = {m: [] for m in ("m1", "m2", "lit", "aggregate")}
    assignments = {"m1": [], "m2": []}
    for t_dur in t_durs:
        n_obs = int(round(t_dur / DT))
        windows = [ObservationWindow.from_pair(p, t_dur) for p in pairs]
        outcomes = {
            "m1": [recognize_m1(lib, w) for w in windows],
            "m2": [recognize_m2(lib, w, sigma) for w in windows],
        }
        pw = PredictionWindows(pairs, [n_obs - 1] * len(pairs), every_frame=every_frame)
        rmse = {m: pw.rmse(np.array([o.params.as_array() for o in outs])) for m, outs in outcomes.items()}
        rmse["lit"] = pw.rmse(lib.baselines["lit"].as_array())
        rmse["aggregate"] = pw.rmse(lib.baselines["aggregate"].as_array())
        for m, r in rmse.items():
            curves[m].append({"t_dur": t_dur, "mean_rmse": _mean(r), "n": int(len(r))})
        for m, outs in outcomes.items():
            assignments[m].append({"t_dur": t_dur, "counts": np.bincount([o.cluster for o in outs],
                                                                         minlength=lib.n_clusters).tolist()})

    improvements = {}
    for m in ("m1", "m2"):
        for base in ("lit", "aggregate"):
            vals = [_improvement(b["mean_rmse"], x["mean_rmse"]) for b, x in zip(curves[base], curves[m])]
            i = int(np.argmax(vals))
            improvements[f"{m}_vs_{base}"] = {"per_t_dur": vals, "max": vals[i], "argmax_t_dur": t_durs[i]}
    best = min(range(len(t_durs)), key=lambda i: curves["m2"][i]["mean_rmse"])
    return {
        "curves": curves,
        "assignments": assignments,
        "improvements": improvements,
        "best_m2": {"t_dur": t_durs[best], "mean_rmse": curves["m2"][best]["mean_rmse"]},
        "baselines": {k: lib.baselines[k].to_dict() for k in ("lit", "aggregate")},
        "metadata": {
            "sigma": sigma,
            "t_durs": t_durs,
            "n_pairs": len(pairs),
            "excluded": excluded,
            "every_frame": every_frame,
            "dataset_hash": pairs_sha256(online_pairs),
            "library_hash": hashlib.sha256(lib.to_json().encode()).hexdigest(),
        },
    }


def run_sigma_sweep(lib: StyleLibrary, online_pairs: Sequence[CarFollowingPair], sigmas: Sequence[float],
                    t_durs: Sequence[float], every_frame: bool = False) -> list[dict]:
    """Method-2 mean RMSE for every (sigma, t_dur) combination."""
    pairs, excluded = _eligible(online_pairs, t_durs)
    if not pairs:
        raise DataError("no online pair supports the largest t_dur plus a 5 s prediction")
    if excluded:
        log.info("sigma sweep excluded %d short pair(s)", excluded)
    rows = []
    for t_dur in sorted(float(t) for t in t_durs):
        n_obs = int(round(t_dur / DT))
        windows = [ObservationWindow.from_pair(p, t_dur) for p in pairs]
        pw = PredictionWindows(pairs, [n_obs - 1] * len(pairs), every_frame=every_frame)
        for sigma in sigmas:
            pv = np.array([recognize_m2(lib, w, sigma).params.as_array() for w in windows])
            r = pw.rmse(pv)
            rows.append({"sigma": float(sigma), "t_dur": t_dur, "mean_rmse": _mean(r), "n": int(len(r))})
    return rows


def write_benchmark_artifacts(output_dir, report: dict) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "benchmark_report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    rows = [[pt["t_dur"], m, pt["mean_rmse"], pt["n"]] for m, pts in report["curves"].items() for pt in pts]
    write_csv(out / "benchmark_curves.csv", "benchmark_curves", ["t_dur", "method", "mean_rmse", "n"], rows)


def write_sigma_sweep(output_dir, rows: list[dict]) -> None:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sigma_sweep.csv", "sigma_sweep", ["sigma", "t_dur", "mean_rmse", "n"],
              [[r["sigma"], r["t_dur"], r["mean_rmse"], r["n"]] for r in rows])

