"""Command-line front end: ``bpdhar {synth,featurize,cluster,experiment,report}``.

Exit status: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys

import numpy as np

from ._seeding import derive_seed
from .bpd import build_histograms, kmeans_cluster, time_based_assign, write_bpd_model
from .config import ConfigError, RunConfig
from .dataset import (
    N_LABELS,
    RecordingFormatError,
    RecordingValidationError,
    load_recording,
    read_annotations_csv,
    segment_day,
    segment_days,
    write_ground_truth,
    write_recording,
)
from .experiments import (
    ExperimentGrid,
    cells_dir,
    matched_points,
    prepare_subject,
    read_confusion_csv,
    read_results_csv,
    run_grid,
    unit_name,
    write_summary,
)
from .features import WindowSpec, featurize_recording, write_features_csv
from .report import best_cell, parse_cell, write_report
from .synthesis import SynthesisConfig, SynthesisSpecError, default_synthesis_config

log = logging.getLogger("bpdhar")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class DataError(Exception):
    """Missing or malformed input data; exit status 3."""


# ------------------------------------------------------------------ helpers


def _signal_files(data_dir: pathlib.Path, subjects=()) -> dict:
    if not data_dir.is_dir():
        raise DataError(f"data directory {data_dir} does not exist")
    found = {p.name[: -len(".signal.csv")]: p for p in sorted(data_dir.glob("*.signal.csv"))}
    if subjects:
        missing = sorted(set(subjects) - set(found))
        if missing:
            raise DataError(f"no signal file for subjects {missing} in {data_dir}")
        found = {s: found[s] for s in subjects}
    if not found:
        raise DataError(f"no *.signal.csv files in {data_dir}")
    return found


def _annotation_file(data_dir: pathlib.Path, subject: str) -> pathlib.Path:
    path = data_dir / f"{subject}.annotations.csv"
    if not path.exists():
        raise DataError(f"missing annotation file {path}")
    return path


def _copy_config(cfg: RunConfig, out: pathlib.Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.dumps(), encoding="utf-8")


# -------------------------------------------------------------- subcommands


def cmd_synth(cfg: RunConfig, args) -> int:
    if cfg.synth_spec:
        path = pathlib.Path(cfg.synth_spec)
        if not path.is_file():
            raise ConfigError(f"synthesis spec {path} not found")
        spec = SynthesisConfig.load(path)
    else:
        spec = default_synthesis_config(n_days=cfg.days)
    out = pathlib.Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "synthesis.json").write_text(spec.to_json(), encoding="utf-8")
    for subject in spec.subjects:
        recording, truth = spec.generate(subject, cfg.seed)
        write_recording(recording, out)
        write_ground_truth(truth, out / f"{subject.subject_id}.truth.csv")
        log.info("wrote %s (%d samples)", subject.subject_id, len(recording.timestamps_ms))
    return EXIT_OK


def cmd_featurize(cfg: RunConfig, args) -> int:
    data_dir, out = pathlib.Path(cfg.data_dir), pathlib.Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.window_spec()
    for subject, path in _signal_files(data_dir, cfg.subjects).items():
        recording = load_recording(path, annotations_path=_annotation_file(data_dir, subject))
        vectors = featurize_recording(recording, spec, segment_day(recording, cfg.segment_min))
        write_features_csv(vectors, out / f"{subject}.features.csv")
        log.info("%s: %d feature vectors", subject, len(vectors))
    return EXIT_OK


def cmd_cluster(cfg: RunConfig, args) -> int:
    data_dir, out = pathlib.Path(cfg.data_dir), pathlib.Path(cfg.out_dir)
    for subject in _signal_files(data_dir, cfg.subjects):
        annotations = read_annotations_csv(_annotation_file(data_dir, subject))
        days = sorted({a.day for a in annotations})
        segments = segment_days(days, annotations, cfg.segment_min)
        if cfg.strategy == "kmeans":
            histograms = build_histograms(segments, annotations)
            if cfg.k > len(histograms):
                raise DataError(f"{subject}: k={cfg.k} exceeds the {len(histograms)} annotated segments")
            model = kmeans_cluster(histograms, cfg.k,
                                   derive_seed(cfg.seed, "kmeans", subject, cfg.segment_min, cfg.k))
        else:
            model = time_based_assign(segments, cfg.k)
        prefix = out / f"{subject}_{cfg.strategy}_k{cfg.k:02d}_s{cfg.segment_min:03d}"
        write_bpd_model(model, segments, prefix)
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, args) -> int:
    data_dir, out = pathlib.Path(cfg.data_dir), pathlib.Path(cfg.out_dir)
    files = _signal_files(data_dir, cfg.subjects)
    grid = cfg.grid(subjects=tuple(files))
    spec = cfg.window_spec()
    data = {}
    for subject, path in files.items():
        recording = load_recording(path, annotations_path=_annotation_file(data_dir, subject))
        data[subject] = prepare_subject(recording, spec)
        log.info("%s: %d labelled windows", subject, len(data[subject].windows))
    _copy_config(cfg, out)
    results = run_grid(grid, data, window_spec=spec, out_dir=out, jobs=cfg.jobs)
    points = matched_points(results) if "time_based" in grid.strategies else []
    write_summary(points, out / "summary.csv")
    print(f"{len(results)} result rows -> {out / 'results.csv'}")
    return EXIT_OK


def _cell_confusion(results_path: pathlib.Path, cell) -> np.ndarray | None:
    """Sum the confusion sidecars of ``cell`` over subjects and repetitions."""
    meta_path = results_path.parent / "metadata.json"
    if not meta_path.exists():
        return None
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    grid = ExperimentGrid(**meta["grid"])
    cell_dir = cells_dir(results_path.parent, grid, WindowSpec(**meta["window"]))
    strategy, k, seg, kind = cell
    total = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    for subject in grid.subjects:
        path = cell_dir / f"{unit_name((strategy, k, seg, subject))}_{kind}.confusion.csv"
        if not path.exists():
            return None
        for matrix in read_confusion_csv(path).values():
            total += matrix
    return total


def cmd_report(cfg: RunConfig, args) -> int:
    results_path = pathlib.Path(args.results)
    if not results_path.is_file():
        raise DataError(f"results file {results_path} not found")
    try:
        results = read_results_csv(results_path)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if not results:
        raise DataError(f"{results_path}: no result rows")
    try:
        cell = parse_cell(cfg.report_cell) if cfg.report_cell else best_cell(results)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    confusion = _cell_confusion(results_path, cell)
    if confusion is None:
        log.warning("no confusion sidecars for cell %s; skipping heat map", cell)
    counts = {}
    data_dir = pathlib.Path(cfg.data_dir)
    for subject in sorted({r.subject for r in results}):
        path = data_dir / f"{subject}.annotations.csv"
        if path.exists():
            labels = [int(a.label) for a in read_annotations_csv(path)]
            counts[subject] = np.bincount(labels, minlength=N_LABELS).tolist()
    written = write_report(results, cfg.out_dir, confusion=confusion, cell=cell, annotation_counts=counts)
    for path in written:
        print(path)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "featurize": cmd_featurize,
    "cluster": cmd_cluster,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


# ------------------------------------------------------------------ parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--data", dest="data_dir", help="dataset directory")
    common.add_argument("--subjects", help="comma-separated subject ids (default: all)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="bpdhar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--spec", dest="synth_spec", help="JSON synthesis spec")
    p.add_argument("--days", type=int)

    p = sub.add_parser("featurize", parents=[common], help="write per-window feature CSVs")
    p.add_argument("--segment-min", type=int)

    p = sub.add_parser("cluster", parents=[common], help="assign BPDs to time segments")
    p.add_argument("--k", type=int)
    p.add_argument("--segment-min", type=int)
    p.add_argument("--strategy", choices=("kmeans", "time_based"))

    p = sub.add_parser("experiment", parents=[common], help="run the experiment grid")
    p.add_argument("--ks", help="e.g. 1-20 or 1,2,5")
    p.add_argument("--segment-lengths", dest="segment_lengths_min")
    p.add_argument("--classifiers", dest="classifier_kinds")
    p.add_argument("--strategies")
    p.add_argument("--repetitions", type=int)

    p = sub.add_parser("report", parents=[common], help="charts and tables from a results CSV")
    p.add_argument("results", help="results.csv from `bpdhar experiment`")
    p.add_argument("--cell", dest="report_cell", help="strategy,k,segment_min,classifier")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in RunConfig.field_names():
        value = getattr(args, key, None)
        if value is None:
            continue
        if isinstance(value, str):
            cfg.set(key, value)
        else:
            setattr(cfg, key, value)
    if cfg.jobs <= 0:
        raise ConfigError("jobs must be >= 1")
    if args.verbose:
        cfg.log_level = "INFO" if args.verbose == 1 else "DEBUG"
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        logging.basicConfig(level=cfg.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, SynthesisSpecError) as exc:
        print(f"bpdhar: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, RecordingFormatError, RecordingValidationError) as exc:
        print(f"bpdhar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
