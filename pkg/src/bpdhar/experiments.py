"""Factorial experiment: strategy x k x segment length x classifier x subject x repetition.

BPD models are fit on the full data of a subject (the BPD of every test
window is treated as known), then each repetition splits the windows 70/30,
trains one classifier per BPD and scores the test windows.

Seeds (``derive_seed`` of the master seed and a factor tuple):

* split of repetition ``r`` for subject ``s``: ``("split", s, r)``
* classifier training: ``("train", s, classifier, r)``
* k-means: ``("kmeans", s, segment_min, k)``

Split and training seeds do not depend on the strategy, ``k`` or segment
length, so all cells of one subject and repetition see the same split.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing
import os
import pathlib
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._seeding import derive_seed
from .bpd import STRATEGIES, build_histograms, kmeans_cluster, time_part
from .classifiers import BpdClassifierBank, ClassifierKind
from .dataset import (
    DAY_WINDOW_MINUTES,
    N_LABELS,
    Recording,
    date_from_epoch_day,
    segment_days,
    segment_start,
)
from .features import WindowFeatures, WindowSpec, compute_window_features
from .metrics import confusion_matrix_arrays, f1_scores

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_LENGTHS = (5, 10, 15, 30, 60, 120)
RESULT_HEADER = (
    ["strategy", "k", "segment_min", "classifier", "subject", "rep", "f1_macro"]
    + [f"f1_c{i}" for i in range(N_LABELS)]
    + ["n_train", "n_test", "n_fallback"]
)
SUMMARY_HEADER = ["classifier", "k", "segment_min", "f1_kmeans_mean", "f1_time_mean", "delta"]
CONFUSION_HEADER = ["rep", "true_label"] + [f"pred_c{i}" for i in range(N_LABELS)]

# time_based rows carry no histogram segment length
TIME_BASED_SEGMENT = 0


@dataclass(frozen=True)
class ExperimentGrid:
    strategies: tuple = STRATEGIES
    ks: tuple = tuple(range(1, 21))
    segment_lengths_min: tuple = DEFAULT_SEGMENT_LENGTHS
    classifier_kinds: tuple = tuple(k.value for k in ClassifierKind)
    subjects: tuple = ()
    repetitions: int = 10
    train_fraction: float = 0.7
    master_seed: int = 0

    def __post_init__(self):
        for name in ("strategies", "ks", "segment_lengths_min", "classifier_kinds", "subjects"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        for kind in self.classifier_kinds:
            ClassifierKind(kind)
        if any(int(k) < 1 for k in self.ks):
            raise ValueError("every k must be >= 1")
        for seg in self.segment_lengths_min:
            if seg <= 0 or seg % 5 or DAY_WINDOW_MINUTES % seg:
                raise ValueError(f"segment length {seg} must be a multiple of 5 dividing {DAY_WINDOW_MINUTES}")

    def units(self) -> list:
        """Work units ``(strategy, k, segment_min, subject)`` in canonical order."""
        units = []
        for strategy in sorted(self.strategies):
            segs = sorted(self.segment_lengths_min) if strategy == "kmeans" else [TIME_BASED_SEGMENT]
            for k in sorted(self.ks):
                for seg in segs:
                    for subject in sorted(self.subjects):
                        units.append((strategy, int(k), int(seg), subject))
        return units

    def n_rows(self) -> int:
        return len(self.units()) * len(self.classifier_kinds) * self.repetitions


@dataclass
class ExperimentResult:
    strategy: str
    k: int
    segment_min: int
    classifier: str
    subject: str
    rep: int
    f1_macro: float
    f1_per_class: np.ndarray
    confusion: np.ndarray
    n_train: int
    n_test: int
    n_fallback: int

    @property
    def key(self):
        return (self.strategy, self.k, self.segment_min, self.classifier, self.subject, self.rep)

    def row(self) -> list:
        return (
            [self.strategy, self.k, self.segment_min, self.classifier, self.subject, self.rep,
             repr(float(self.f1_macro))]
            + [repr(float(v)) for v in self.f1_per_class]
            + [self.n_train, self.n_test, self.n_fallback]
        )


@dataclass(frozen=True)
class SubjectData:
    """Windows of one subject with a known label, plus its annotation log."""

    subject_id: str
    windows: WindowFeatures
    days: tuple
    annotations: tuple = field(repr=False)


def prepare_subject(recording: Recording, spec: WindowSpec = WindowSpec()) -> SubjectData:
    table = compute_window_features(recording, spec)
    return SubjectData(recording.subject_id, table.subset(table.labels >= 0),
                       recording.days, recording.annotations)


# ------------------------------------------------------------------ operations


def split_indices(n: int, train_fraction: float, seed: int):
    if n < 2:
        raise ValueError("need at least 2 windows to split")
    n_train = int(np.floor(n * train_fraction + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split_train_test(windows: Sequence, train_fraction: float, seed: int) -> tuple:
    """Uniform, unstratified split; ``round(n * train_fraction)`` windows go to training."""
    train, test = split_indices(len(windows), train_fraction, seed)
    return [windows[i] for i in train], [windows[i] for i in test]


def window_bpds(data: SubjectData, strategy: str, k: int, segment_min: int, seed: int) -> np.ndarray:
    """Oracle BPD of each window of ``data`` (-1 where the segment has none)."""
    w = data.windows
    if strategy == "time_based":
        return time_part(w.center_slot, k).astype(np.int64)
    segments = segment_days(data.days, data.annotations, segment_min)
    histograms = build_histograms(segments, data.annotations)
    model = kmeans_cluster(histograms, k, seed)
    starts = segment_start(w.center_slot, segment_min)
    ids = [f"{date_from_epoch_day(d).isoformat()}/{s:04d}" for d, s in zip(w.center_day, starts)]
    return np.array([model.assignment.get(i, -1) for i in ids], dtype=np.int64)


def _modal_label(y) -> int:
    return int(np.argmax(np.bincount(y, minlength=N_LABELS)))


def run_unit(data: SubjectData, unit: tuple, grid: ExperimentGrid) -> list:
    """All classifier x repetition rows of one ``(strategy, k, segment_min, subject)`` unit."""
    strategy, k, segment_min, subject = unit
    w = data.windows
    d = window_bpds(data, strategy, k, segment_min,
                    derive_seed(grid.master_seed, "kmeans", subject, segment_min, k))
    keep = np.flatnonzero(d >= 0)
    X, y, d = w.X[keep], w.labels[keep], d[keep]
    results = []
    for rep in range(grid.repetitions):
        train, test = split_indices(len(y), grid.train_fraction,
                                    derive_seed(grid.master_seed, "split", subject, rep))
        fallback_label = _modal_label(y[train])
        for kind in grid.classifier_kinds:
            seed = derive_seed(grid.master_seed, "train", subject, kind, rep)
            bank = BpdClassifierBank(kind, seed).fit(X[train], y[train], d[train])
            known = np.isin(d[test], bank.bpds_)
            pred = np.full(test.size, fallback_label, dtype=np.int64)
            if known.any():
                pred[known] = bank.predict(X[test][known], d[test][known])
            cm = confusion_matrix_arrays(y[test], pred)
            macro, per_class = f1_scores(cm)
            results.append(ExperimentResult(strategy, k, segment_min, kind, subject, rep, macro,
                                            per_class, cm, int(train.size), int(test.size),
                                            int((~known).sum())))
    return results


# ---------------------------------------------------------------------- output


def unit_name(unit) -> str:
    strategy, k, seg, subject = unit
    return f"{strategy}_k{k:02d}_s{seg:03d}_{subject}"


def _fingerprint(grid: ExperimentGrid, window_spec: WindowSpec) -> str:
    # everything a unit's rows depend on besides the unit itself
    return "%016x" % derive_seed(grid.master_seed, grid.repetitions, repr(grid.train_fraction),
                                 ",".join(grid.classifier_kinds), window_spec.window_seconds,
                                 repr(window_spec.overlap_fraction))


def cells_dir(out_dir, grid: ExperimentGrid, window_spec: WindowSpec) -> pathlib.Path:
    """Directory holding the per-unit files of ``grid`` under ``out_dir``."""
    return pathlib.Path(out_dir) / "cells" / _fingerprint(grid, window_spec)


def _atomic_write(path: pathlib.Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _results_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_HEADER)
    for r in results:
        writer.writerow(r.row())
    return buf.getvalue()


def _confusion_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CONFUSION_HEADER)
    for r in results:
        for i in range(N_LABELS):
            writer.writerow([r.rep, i] + [int(v) for v in r.confusion[i]])
    return buf.getvalue()


def _write_unit(cell_dir: pathlib.Path, unit, results) -> None:
    name = unit_name(unit)
    for kind in sorted({r.classifier for r in results}):
        rows = [r for r in results if r.classifier == kind]
        _atomic_write(cell_dir / f"{name}_{kind}.confusion.csv", _confusion_csv(rows))
    _atomic_write(cell_dir / f"{name}.results.csv", _results_csv(results))


def read_results_csv(path) -> list:
    """Rows of a results CSV as :class:`ExperimentResult` (confusion left empty)."""
    results = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULT_HEADER:
            raise ValueError(f"{path}:1: unexpected results header")
        for row in reader:
            if len(row) != len(RESULT_HEADER):
                raise ValueError(f"{path}:{reader.line_num}: expected {len(RESULT_HEADER)} fields")
            try:
                results.append(ExperimentResult(
                    row[0], int(row[1]), int(row[2]), row[3], row[4], int(row[5]), float(row[6]),
                    np.array([float(v) for v in row[7:14]]), np.zeros((N_LABELS, N_LABELS), dtype=np.int64),
                    int(row[14]), int(row[15]), int(row[16]),
                ))
            except ValueError as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from None
    return results


def read_confusion_csv(path) -> dict:
    """Map repetition -> 7x7 confusion matrix."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rep, i = int(row[0]), int(row[1])
            out.setdefault(rep, np.zeros((N_LABELS, N_LABELS), dtype=np.int64))[i] = [int(v) for v in row[2:]]
    return out


def _load_unit(cell_dir: pathlib.Path, unit, grid):
    name = unit_name(unit)
    path = cell_dir / f"{name}.results.csv"
    if not path.exists():
        return None
    results = read_results_csv(path)
    if len(results) != grid.repetitions * len(grid.classifier_kinds):
        return None
    for kind in grid.classifier_kinds:
        cpath = cell_dir / f"{name}_{kind}.confusion.csv"
        if not cpath.exists():
            return None
        matrices = read_confusion_csv(cpath)
        for r in results:
            if r.classifier == kind:
                r.confusion = matrices[r.rep]
    return results


# ----------------------------------------------------------------------- runner

_WORKER_DATA: dict = {}


def _run_unit_worker(unit, grid):
    return unit, run_unit(_WORKER_DATA[unit[3]], unit, grid)


def run_grid(grid: ExperimentGrid, data: Mapping, *, window_spec: WindowSpec = WindowSpec(),
             out_dir=None, jobs: int = 1) -> list:
    """Run every cell of ``grid`` and return the rows in canonical order.

    ``data`` maps subject id to a :class:`Recording` or a prepared
    :class:`SubjectData`. With ``out_dir``, every finished unit is written
    to ``out_dir/cells`` at once and reused by a later run with the same
    grid; ``results.csv`` is then written in canonical order.
    """
    missing = [s for s in grid.subjects if s not in data]
    if missing:
        raise KeyError(f"subjects missing from data: {missing}")
    subjects = {
        s: data[s] if isinstance(data[s], SubjectData) else prepare_subject(data[s], window_spec)
        for s in grid.subjects
    }
    cell_dir = None
    if out_dir is not None:
        out_dir = pathlib.Path(out_dir)
        cell_dir = cells_dir(out_dir, grid, window_spec)
        cell_dir.mkdir(parents=True, exist_ok=True)

    done = {}
    todo = []
    for unit in grid.units():
        cached = _load_unit(cell_dir, unit, grid) if cell_dir is not None else None
        if cached is None:
            todo.append(unit)
        else:
            done[unit] = cached

    def finish(unit, results):
        done[unit] = results
        if cell_dir is not None:
            _write_unit(cell_dir, unit, results)
        log.info("finished %s (%d/%d)", unit_name(unit), len(done), len(grid.units()))

    if jobs > 1 and len(todo) > 1:
        _WORKER_DATA.clear()
        _WORKER_DATA.update(subjects)
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = [pool.submit(_run_unit_worker, unit, grid) for unit in todo]
            for fut in as_completed(futures):
                finish(*fut.result())
        _WORKER_DATA.clear()
    else:
        for unit in todo:
            finish(unit, run_unit(subjects[unit[3]], unit, grid))

    results = sorted((r for rows in done.values() for r in rows), key=lambda r: r.key)
    if out_dir is not None:
        write_results(results, out_dir / "results.csv")
        write_metadata(grid, window_spec, out_dir / "metadata.json")
    return results


def write_results(results, path) -> None:
    _atomic_write(pathlib.Path(path), _results_csv(sorted(results, key=lambda r: r.key)))


def write_metadata(grid: ExperimentGrid, window_spec: WindowSpec, path) -> None:
    meta = {
        "grid": {
            "strategies": list(grid.strategies),
            "ks": list(grid.ks),
            "segment_lengths_min": list(grid.segment_lengths_min),
            "classifier_kinds": list(grid.classifier_kinds),
            "subjects": list(grid.subjects),
            "repetitions": grid.repetitions,
            "train_fraction": grid.train_fraction,
            "master_seed": grid.master_seed,
        },
        "window": {"window_seconds": window_spec.window_seconds,
                   "overlap_fraction": window_spec.overlap_fraction},
        "bpd_oracle": "BPD models are fit on all windows of a subject before the train/test "
                      "split; test windows use their true BPD.",
        "f1": "macro mean over classes present in the true test labels",
        "time_based_segment_min": TIME_BASED_SEGMENT,
    }
    _atomic_write(pathlib.Path(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- aggregation


def subject_means(results) -> dict:
    """Mean macro-F1 over repetitions for each ``(strategy, k, segment_min, classifier, subject)``."""
    acc = {}
    for r in results:
        acc.setdefault(r.key[:5], []).append(r.f1_macro)
    return {key: float(np.mean(v)) for key, v in sorted(acc.items())}


def cell_means(results) -> dict:
    """Mean over subjects of the per-subject means, keyed by ``(strategy, k, segment_min, classifier)``."""
    acc = {}
    for key, value in subject_means(results).items():
        acc.setdefault(key[:4], []).append(value)
    return {key: float(np.mean(v)) for key, v in sorted(acc.items())}


@dataclass(frozen=True)
class MatchedPoint:
    classifier: str
    k: int
    segment_min: int
    f1_kmeans_mean: float
    f1_time_mean: float

    @property
    def delta(self) -> float:
        return self.f1_kmeans_mean - self.f1_time_mean


def matched_points(results) -> list:
    """Compare k-means at ``(k, 600/k)`` with time-based at ``k`` where both exist."""
    means = cell_means(results)
    if not any(key[0] == "time_based" for key in means):
        warnings.warn("no time_based results; no matched points", RuntimeWarning)
        return []
    points = []
    for (strategy, k, seg, kind), f1_km in means.items():
        if strategy != "kmeans" or DAY_WINDOW_MINUTES % k or DAY_WINDOW_MINUTES // k != seg:
            continue
        f1_time = means.get(("time_based", k, TIME_BASED_SEGMENT, kind))
        if f1_time is not None:
            points.append(MatchedPoint(kind, k, seg, f1_km, f1_time))
    return sorted(points, key=lambda p: (p.classifier, p.k))


def write_summary(points, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for p in points:
        writer.writerow([p.classifier, p.k, p.segment_min, repr(p.f1_kmeans_mean),
                         repr(p.f1_time_mean), repr(p.delta)])
    _atomic_write(pathlib.Path(path), buf.getvalue())
