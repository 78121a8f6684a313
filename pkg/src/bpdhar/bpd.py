"""Behavioural predispositions (BPDs): one label per time segment.

Two strategies are provided. ``kmeans`` clusters the per-segment annotation
histograms of a single subject, so each centroid is the behaviour
distribution of one BPD. ``time_based`` ignores the annotations and splits
the 08:00-18:00 window into ``k`` contiguous parts shared by all days.
"""
from __future__ import annotations

import csv
import pathlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .dataset import (
    DAY_START_MINUTE,
    DAY_WINDOW_MINUTES,
    N_LABELS,
    SLOT_MINUTES,
    AnnotationRecord,
    TimeSegment,
)
from .kmeans import HistogramKMeans

STRATEGIES = ("kmeans", "time_based")


@dataclass(frozen=True)
class AnnotationHistogram:
    segment_id: str
    probs: np.ndarray
    count: int


def build_histograms(segments: Sequence[TimeSegment],
                     annotations: Sequence[AnnotationRecord]) -> list:
    """Relative annotation frequencies of every non-empty segment."""
    label_of = {(r.day, r.start_minute): int(r.label) for r in annotations}
    histograms = []
    for seg in segments:
        counts = np.zeros(N_LABELS)
        for minute in range(seg.start_minute, seg.end_minute, SLOT_MINUTES):
            label = label_of.get((seg.day, minute))
            if label is not None:
                counts[label] += 1
        total = int(counts.sum())
        if total:
            histograms.append(AnnotationHistogram(seg.segment_id, counts / total, total))
    return histograms


def histogram_matrix(histograms: Sequence[AnnotationHistogram]) -> np.ndarray:
    return np.array([h.probs for h in histograms], dtype=np.float64).reshape(-1, N_LABELS)


@dataclass(frozen=True)
class BpdModel:
    strategy: str
    k: int
    assignment: dict = field(repr=False)
    centroids: np.ndarray | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def bpd_of(self, segment_id: str) -> int:
        return self.assignment[segment_id]


def kmeans_cluster(histograms: Sequence[AnnotationHistogram], k: int, seed: int) -> BpdModel:
    if not 1 <= k <= len(histograms):
        raise ValueError(f"k={k} must lie in [1, {len(histograms)}] (number of histograms)")
    km = HistogramKMeans(n_clusters=k, random_state=seed).fit(histogram_matrix(histograms))
    assignment = {h.segment_id: int(d) for h, d in zip(histograms, km.labels_)}
    return BpdModel("kmeans", k, assignment, km.cluster_centers_)


def time_part(start_minute, k: int):
    """Index of the day part containing ``start_minute``; the last part absorbs
    the remainder when 600 is not divisible by ``k``."""
    part = DAY_WINDOW_MINUTES // k
    idx = (np.asarray(start_minute) - DAY_START_MINUTE) // part
    return np.minimum(idx, k - 1)


class TimeOfDayPartitioner(BaseEstimator):
    """Maps start minutes to one of ``n_parts`` contiguous day parts."""

    def __init__(self, n_parts=1):
        self.n_parts = n_parts

    def fit(self, X=None, y=None):
        if not 1 <= self.n_parts <= DAY_WINDOW_MINUTES // SLOT_MINUTES:
            raise ValueError(f"n_parts={self.n_parts} must lie in [1, {DAY_WINDOW_MINUTES // SLOT_MINUTES}]")
        part = DAY_WINDOW_MINUTES // self.n_parts
        self.boundaries_ = DAY_START_MINUTE + part * np.arange(self.n_parts)
        return self

    def predict(self, X):
        minutes = check_array(np.asarray(X).reshape(-1, 1), dtype=np.int64).ravel()
        return time_part(minutes, self.n_parts).astype(np.int64)


def time_based_assign(segments: Sequence[TimeSegment], k: int) -> BpdModel:
    partitioner = TimeOfDayPartitioner(k).fit()
    if not segments:
        return BpdModel("time_based", k, {})
    parts = partitioner.predict([s.start_minute for s in segments])
    assignment = {s.segment_id: int(d) for s, d in zip(segments, parts)}
    return BpdModel("time_based", k, assignment)


def label_windows(model: BpdModel, features: Sequence) -> tuple:
    """Attach the oracle BPD to each feature vector.

    Returns ``(pairs, n_dropped)``; windows whose segment has no BPD are dropped.
    """
    pairs = []
    dropped = 0
    for fv in features:
        d = model.assignment.get(fv.segment_id)
        if d is None:
            dropped += 1
        else:
            pairs.append((fv, d))
    return pairs, dropped


def write_bpd_model(model: BpdModel, segments: Sequence[TimeSegment], path_prefix) -> tuple:
    """Write ``<prefix>.bpd.csv`` and, for k-means, ``<prefix>.centroids.csv``."""
    prefix = pathlib.Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    assign_path = prefix.with_name(prefix.name + ".bpd.csv")
    with open(assign_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["segment_id", "date", "start_minute", "bpd"])
        for seg in segments:
            d = model.assignment.get(seg.segment_id)
            if d is not None:
                writer.writerow([seg.segment_id, seg.day.isoformat(), seg.start_minute, d])
    paths = [assign_path]
    if model.centroids is not None:
        centroid_path = prefix.with_name(prefix.name + ".centroids.csv")
        with open(centroid_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bpd"] + [f"p{i}" for i in range(N_LABELS)])
            for d, row in enumerate(model.centroids):
                writer.writerow([d] + [repr(float(v)) for v in row])
        paths.append(centroid_path)
    return tuple(paths)
