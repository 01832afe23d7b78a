"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .calibration import calibrate, label_styles
from .config import PipelineConfig, load_config
from .data import extract_pairs, load_pairs, load_trajectories, save_pairs, split_dataset
from .exceptions import ConfigError, DataError, DriveStyleError, StyleTieError
from .features import FeatureExtractor, write_feature_csv
from .idm import LITERATURE_PARAMS
from .recognition import ObservationWindow, StyleLibrary, accumulate, recognize_m1, recognize_m2
from .synth import make_corpus, write_trajectory_csv

log = logging.getLogger("drivestyle")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="TOML or JSON pipeline configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--workers", type=int, help="parallel workers (default: all cores)")
    p.add_argument("--output-dir", default=".", help="directory for output artifacts")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="drivestyle", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trajectory corpus")
    p.add_argument("--n-pairs", type=int, default=30)
    p.add_argument("--noise", type=float, help="acceleration noise for every style (default: per-style)")
    p.add_argument("--frames", type=int, default=250)

    p = sub.add_parser("extract-pairs", parents=[common], help="extract and split car-following pairs")
    p.add_argument("--input", help="trajectory file (default: data.path from config)")

    p = sub.add_parser("features", parents=[common], help="write the 13-indicator feature matrix")
    p.add_argument("--pairs", required=True)

    p = sub.add_parser("learn-styles", parents=[common], help="full offline run: styles + calibration")
    p.add_argument("--input", help="trajectory file (default: data.path from config)")
    p.add_argument("--pairs", help="use already-extracted offline pairs instead of a trajectory file")

    p = sub.add_parser("calibrate", parents=[common], help="calibrate IDM parameters for a set of pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--clusters", help="projections.csv from learn-styles; calibrate each cluster")
    p.add_argument("--budget", type=int)

    p = sub.add_parser("recognize", parents=[common], help="recognize driving styles (batch or stream)")
    p.add_argument("--library", required=True)
    p.add_argument("--pairs", help="batch mode: pairs JSON")
    p.add_argument("--t-dur", type=float, default=2.0)
    p.add_argument("--method", choices=("m1", "m2"), default="m2")
    p.add_argument("--sigma", type=float)
    p.add_argument("--stream", action="store_true", help="read NDJSON records from stdin")

    p = sub.add_parser("benchmark", parents=[common], help="RMSE benchmark over the t_dur grid")
    p.add_argument("--library", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--sigma", type=float)

    p = sub.add_parser("sigma-sweep", parents=[common], help="method-2 RMSE over sigma and t_dur")
    p.add_argument("--library", required=True)
    p.add_argument("--pairs", required=True)
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    elif args.config is None or cfg.workers < 1:
        cfg.workers = os.cpu_count() or 1
    return cfg


def _out(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args, cfg):
    pairs, labels = make_corpus(args.n_pairs, noise=args.noise, n_frames=args.frames, seed=cfg.seed)
    out = _out(args)
    write_trajectory_csv(pairs, out / "synthetic_trajectories.csv")
    (out / "synthetic_config.json").write_text(json.dumps({
        "seed": cfg.seed,
        "data": {"path": "synthetic_trajectories.csv", "units": "meters"},
    }, indent=1))
    (out / "synthetic_labels.json").write_text(json.dumps(
        {"planted": [{"follower_id": p.follower_id, "style": k} for p, k in zip(pairs, labels)]}, indent=1))
    print(f"wrote {len(pairs)} synthetic pairs to {out}")


def _trajectory_path(args, cfg) -> str:
    path = args.input or cfg.data.path
    if not path:
        raise ConfigError("no trajectory file: pass --input or set data.path")
    return path


def cmd_extract_pairs(args, cfg):
    samples = load_trajectories(_trajectory_path(args, cfg), cfg.data.loader_dict())
    pairs = extract_pairs(samples, cfg.data.min_duration)
    out = _out(args)
    save_pairs(pairs, out / "pairs.json")
    split = split_dataset(pairs, cfg.data.split_fraction, cfg.seed, cfg.data.split_strategy)
    save_pairs(split.offline_pairs, out / "offline_pairs.json")
    save_pairs(split.online_pairs, out / "online_pairs.json")
    print(f"{len(pairs)} pairs ({len(split.offline_pairs)} offline / {len(split.online_pairs)} online)")


def cmd_features(args, cfg):
    X = FeatureExtractor(cfg.features.window).transform(load_pairs(args.pairs))
    write_feature_csv(_out(args) / "features.csv", X)
    print(f"wrote {len(X)} feature rows")


def cmd_learn_styles(args, cfg):
    out = _out(args)
    if args.pairs:
        pairs = load_pairs(args.pairs)
        model, report = bm.learn_library(pairs, cfg)
        bm.write_offline_artifacts(out, model, report, None)
    else:
        cfg.data.path = _trajectory_path(args, cfg)
        run = bm.run_offline(cfg, out)
        report = run.report
    print(bm.format_calibration_report(report), end="")
    print(f"PC1+PC2 explained variance: {report['pca']['kept_ratio']:.3f}; elbow K={report['elbow']['elbow_k']}")


def cmd_calibrate(args, cfg):
    pairs = load_pairs(args.pairs)
    budget = args.budget or cfg.calibration.budget
    kw = dict(bounds=cfg.calibration.bounds, budget=budget, seed=cfg.seed, n_starts=cfg.calibration.n_starts,
              initial_guesses=(LITERATURE_PARAMS,), anchor=cfg.calibration.anchor,
              every_frame=cfg.calibration.every_frame, n_jobs=cfg.workers)
    groups = {"aggregate": pairs}
    if args.clusters:
        schema, rows = bm.read_csv(args.clusters)
        if not schema.startswith("drivestyle.projections/"):
            raise DataError(f"{args.clusters} is not a projections file")
        if len(rows) != len(pairs):
            raise DataError(f"{len(rows)} cluster labels for {len(pairs)} pairs")
        labels = np.array([int(r["cluster"]) for r in rows])
        groups = {str(k): [p for p, lab in zip(pairs, labels) if lab == k] for k in sorted(set(labels))} | groups
    results = {name: calibrate(members, **kw) for name, members in groups.items()}
    report = {"calibration": {k: r.to_dict() for k, r in results.items()}, "clusters": [], "lit_mean_rmse": {}}
    clusters = {int(k): r for k, r in results.items() if k != "aggregate"}
    tie = None
    if len(clusters) > 1:
        try:
            styles = label_styles(clusters, cfg.styles.style_overrides)
            report["clusters"] = [{"cluster": k, "style": s} for k, s in styles.items()]
        except StyleTieError as exc:
            tie = exc
    out = _out(args)
    (out / "calibration_report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    text = bm.format_calibration_report(report)
    (out / "calibration_report.txt").write_text(text)
    print(text, end="")
    if tie is not None:
        raise tie


def _outcome_record(vehicle_id, w, o):
    return {"vehicle_id": vehicle_id, "t_dur": round(w.t_dur, 10), "cluster": o.cluster, "style": o.style_name,
            "scores": list(o.per_cluster_scores), "params": o.params.to_dict()}


def _recognizer(args, lib):
    if args.method == "m1":
        return lambda w: recognize_m1(lib, w)
    sigma = args.sigma if args.sigma is not None else lib.sigma_default
    return lambda w: recognize_m2(lib, w, sigma)


def cmd_recognize(args, cfg):
    lib = StyleLibrary.load(args.library)
    rec = _recognizer(args, lib)
    if args.stream:
        return stream_recognize(sys.stdin, sys.stdout, rec)
    if not args.pairs:
        raise ConfigError("recognize needs --pairs or --stream")
    out = _out(args)
    lines = []
    for p in load_pairs(args.pairs):
        w = ObservationWindow.from_pair(p, args.t_dur)
        lines.append(json.dumps(_outcome_record(p.follower_id, w, rec(w)), sort_keys=True))
    (out / "recognition.ndjson").write_text("\n".join(lines) + "\n")
    print(f"recognized {len(lines)} vehicles")


def _record_window(rec: dict) -> ObservationWindow:
    try:
        f, l = rec["follower"], rec["leader"]
        vals = [[float(rec["t"])], [f["x"]], [f["v"]], [f["a"]], [l["x"]], [l["v"]], [rec["gap"]]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed stream record: {exc}") from exc
    return ObservationWindow(*(np.array(v, dtype=float) for v in vals))


def stream_recognize(fin, fout, recognizer) -> int:
    """Recognize on every incoming record, accumulating one window per vehicle."""
    windows: dict = {}
    for lineno, line in enumerate(fin, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"stdin line {lineno}: {exc}") from exc
        vid = rec.get("vehicle_id")
        w = accumulate(windows.get(vid, ObservationWindow.empty()), _record_window(rec))
        windows[vid] = w
        fout.write(json.dumps(_outcome_record(vid, w, recognizer(w)), sort_keys=True) + "\n")
        fout.flush()
    return 0


def cmd_benchmark(args, cfg):
    lib = StyleLibrary.load(args.library)
    pairs = load_pairs(args.pairs)
    sigma = args.sigma if args.sigma is not None else cfg.recognition.sigma
    report = bm.run_benchmark(lib, pairs, cfg.benchmark.t_durs, sigma, cfg.benchmark.every_frame)
    bm.write_benchmark_artifacts(_out(args), report)
    print(f"{'t_dur':>6} " + " ".join(f"{m:>10}" for m in report["curves"]))
    for i, t in enumerate(report["metadata"]["t_durs"]):
        print(f"{t:6.1f} " + " ".join(f"{report['curves'][m][i]['mean_rmse']:10.4f}" for m in report["curves"]))
    for name, imp in report["improvements"].items():
        print(f"{name}: up to {100 * imp['max']:.1f}% at t_dur={imp['argmax_t_dur']}")


def cmd_sigma_sweep(args, cfg):
    lib = StyleLibrary.load(args.library)
    rows = bm.run_sigma_sweep(lib, load_pairs(args.pairs), cfg.benchmark.sigmas, cfg.benchmark.sweep_t_durs,
                              cfg.benchmark.every_frame)
    bm.write_sigma_sweep(_out(args), rows)
    print(f"wrote {len(rows)} sigma-sweep rows")


COMMANDS = {
    "synth": cmd_synth,
    "extract-pairs": cmd_extract_pairs,
    "features": cmd_features,
    "learn-styles": cmd_learn_styles,
    "calibrate": cmd_calibrate,
    "recognize": cmd_recognize,
    "benchmark": cmd_benchmark,
    "sigma-sweep": cmd_sigma_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg) or 0
    except DriveStyleError as exc:
        print(f"drivestyle {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FloatingPointError) as exc:
        print(f"drivestyle {args.command}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
