"""Sliding windows over the acceleration stream and their 39 features.

Feature order (``FEATURE_NAMES``)::

    f00-f29  per axis x, y, z: mean, std, min, max, median, iqr, skew,
             kurtosis, rms, zero-crossing rate (10 each, axis-major)
    f30-f32  Pearson correlation xy, xz, yz
    f33-f38  per axis x, y, z: dominant frequency (Hz), spectral entropy

Spectral features use the one-sided power spectrum of the mean-removed,
Hann-windowed axis, excluding the zero-frequency bin. A window whose axis
is exactly constant gets dominant frequency 0 and entropy 0. Skewness and
excess kurtosis are the biased moment estimators and are 0 for a constant
axis; a correlation involving a constant axis is 0.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataset import (
    MS_PER_DAY,
    MS_PER_MINUTE,
    SLOT_MINUTES,
    AnnotationLabel,
    Recording,
    epoch_day,
)

AXES = ("x", "y", "z")
_AXIS_STATS = ("mean", "std", "min", "max", "median", "iqr", "skew", "kurtosis", "rms", "zcr")
FEATURE_NAMES = tuple(
    [f"{stat}_{axis}" for axis in AXES for stat in _AXIS_STATS]
    + ["corr_xy", "corr_xz", "corr_yz"]
    + [f"{stat}_{axis}" for axis in AXES for stat in ("domfreq", "spec_entropy")]
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class WindowSpec:
    window_seconds: int = 60
    overlap_fraction: float = 0.5

    def __post_init__(self):
        if int(self.window_seconds) != self.window_seconds or self.window_seconds <= 0:
            raise ValueError(f"window_seconds must be a positive integer, got {self.window_seconds!r}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError(f"overlap_fraction must lie in [0, 1), got {self.overlap_fraction!r}")
        stride = self.window_seconds * (1.0 - self.overlap_fraction)
        if abs(stride - round(stride)) > 1e-9 or round(stride) <= 0:
            raise ValueError(f"stride {stride} s is not a positive whole number of seconds")

    @property
    def stride_seconds(self) -> int:
        return int(round(self.window_seconds * (1.0 - self.overlap_fraction)))


@dataclass(frozen=True)
class RawWindows:
    """Complete windows of one recording, referenced by start sample index."""

    recording: Recording
    window_samples: int
    start_index: np.ndarray
    start_ms: np.ndarray
    n_dropped: int = 0
    n_short_days: int = 0

    def __len__(self):
        return int(self.start_index.size)

    def data(self, which=slice(None)) -> np.ndarray:
        """Copy of the selected windows as an ``(m, n, 3)`` array."""
        idx = self.start_index[which]
        view = np.lib.stride_tricks.sliding_window_view(self.recording.acc, self.window_samples, axis=0)
        return np.ascontiguousarray(view[idx].transpose(0, 2, 1))

    def __iter__(self) -> Iterator:
        for i in range(len(self)):
            yield int(self.start_ms[i]), self.data(slice(i, i + 1))[0]

    def batches(self, size=512) -> Iterator:
        for a in range(0, len(self), size):
            yield slice(a, a + size), self.data(slice(a, a + size))


def window_signal(recording: Recording, spec: WindowSpec = WindowSpec()) -> RawWindows:
    """Cut every recorded day into windows on a ``stride_seconds`` grid.

    The grid starts at each day's first sample; candidates that would overlap
    a sample gap or run past the day's data are dropped and counted.
    """
    rate = recording.sample_rate_hz
    n = spec.window_seconds * rate
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"window of {spec.window_seconds} s at {rate} Hz is not a whole number of samples")
    n = int(round(n))
    ts = recording.timestamps_ms
    step = recording.step_ms
    window_ms = spec.window_seconds * 1000
    stride_ms = spec.stride_seconds * 1000
    gaps = np.concatenate([[0], np.cumsum(recording.gap_mask())]) if ts.size else np.zeros(0, dtype=np.int64)

    starts_idx, starts_ms = [], []
    dropped = short = 0
    for _, (i0, i1) in sorted(recording.day_index_ranges.items()):
        t0 = int(ts[i0])
        span = ts[i1 - 1] + step - t0
        n_cand = int((span - window_ms) // stride_ms) + 1 if span >= window_ms else 0
        if n_cand <= 0:
            short += 1
            continue
        cand = t0 + stride_ms * np.arange(n_cand, dtype=np.int64)
        idx = np.searchsorted(ts[i0:i1], cand) + i0
        last = idx + n - 1
        ok = last < i1
        idx_c = np.minimum(idx, i1 - 1)
        last_c = np.minimum(last, i1 - 1)
        ok &= np.abs(ts[idx_c] - cand) < step / 2
        ok &= gaps[last_c] == gaps[idx_c]
        ok &= ts[last_c] < cand + window_ms
        dropped += int(n_cand - ok.sum())
        starts_idx.append(idx[ok])
        starts_ms.append(cand[ok])
    if short:
        warnings.warn(f"{short} day(s) shorter than one {spec.window_seconds} s window", RuntimeWarning)
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return RawWindows(recording, n, cat(starts_idx), cat(starts_ms), dropped, short)


# -------------------------------------------------------------------- features


def power_spectrum(y: np.ndarray, rate_hz: float):
    """One-sided power spectrum along the last axis.

    Scaled so that ``power[..., 1:].sum(-1) == ((y - y.mean(-1)) ** 2).sum(-1)``.
    """
    n = y.shape[-1]
    spec = np.fft.rfft(y, axis=-1)
    power = (spec.real * spec.real + spec.imag * spec.imag) / n
    weights = np.full(power.shape[-1], 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    return np.fft.rfftfreq(n, d=1.0 / rate_hz), power * weights


def _quantile_sorted(ordered, q):
    # numpy's default "linear" percentile on presorted data
    pos = q * (ordered.shape[-1] - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, ordered.shape[-1] - 1)
    frac = pos - lo
    return ordered[..., lo] + frac * (ordered[..., hi] - ordered[..., lo])


def _check_finite(windows):
    bad = np.isnan(windows)
    if bad.any():
        w, i, a = np.argwhere(bad)[0]
        where = f"window {w}, " if windows.shape[0] > 1 else ""
        raise ValueError(f"NaN in input at {where}sample index {i}, axis {AXES[a]}")


def extract_features_batch(windows: np.ndarray, rate_hz: float) -> np.ndarray:
    """Feature matrix ``(m, 39)`` for windows shaped ``(m, n, 3)``."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[2] != 3:
        raise ValueError(f"expected windows of shape (m, n, 3), got {windows.shape}")
    _check_finite(windows)
    m, n, _ = windows.shape
    out = np.zeros((m, N_FEATURES))
    x = np.ascontiguousarray(windows.transpose(0, 2, 1))  # (m, 3, n)
    mean = x.mean(axis=-1)
    constant = np.ptp(x, axis=-1) == 0
    dev = x - mean[..., None]
    dev[constant] = 0.0
    std = np.sqrt((dev * dev).mean(axis=-1))
    live = std > 0  # false for constant axes and when the variance underflows
    # moments of the standardized signal avoid under/overflow at extreme scales
    z = dev / np.where(live, std, 1.0)[..., None]
    z[~live] = 0.0
    z2 = z * z
    skew = (z2 * z).mean(axis=-1)
    kurt = np.where(live, (z2 * z2).mean(axis=-1) - 3.0, 0.0)
    del z2
    ordered = np.sort(x, axis=-1)
    q25, med, q75 = (_quantile_sorted(ordered, q) for q in (0.25, 0.5, 0.75))
    rms = np.sqrt((x * x).mean(axis=-1))
    zcr = (np.signbit(dev[..., 1:]) != np.signbit(dev[..., :-1])) & (dev[..., 1:] != 0) & (dev[..., :-1] != 0)
    zcr = zcr.sum(axis=-1) / max(n - 1, 1)
    stats = np.stack([mean, std, ordered[..., 0], ordered[..., -1], med, q75 - q25, skew, kurt, rms, zcr], axis=-1)
    out[:, :30] = stats.reshape(m, 30)

    for col, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
        out[:, 30 + col] = np.clip((z[:, a] * z[:, b]).mean(axis=-1), -1.0, 1.0)
    del z

    freqs, power = power_spectrum(dev * np.hanning(n), rate_hz)
    power = power[..., 1:]
    total = power.sum(axis=-1)
    dom = freqs[1:][np.argmax(power, axis=-1)]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = power / total[..., None]
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=-1)
    nbins = power.shape[-1]
    h = h / np.log(nbins) if nbins > 1 else np.zeros_like(h)
    silent = constant | (total <= 0)
    dom = np.where(silent, 0.0, dom)
    h = np.where(silent, 0.0, h)
    out[:, 33:] = np.stack([dom, h], axis=-1).reshape(m, 6)
    return out


def extract_features(window: np.ndarray, rate_hz: float) -> np.ndarray:
    """The 39-entry feature vector of one ``(n, 3)`` window."""
    return extract_features_batch(np.asarray(window)[None], rate_hz)[0]


class WindowFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping ``(m, n, 3)`` windows to ``(m, 39)`` features."""

    def __init__(self, sample_rate_hz=50.0):
        self.sample_rate_hz = sample_rate_hz

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim != 3 or X.shape[2] != 3:
            raise ValueError(f"expected windows of shape (m, n, 3), got {X.shape}")
        self.window_samples_ = X.shape[1]
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, X):
        check_is_fitted(self, "window_samples_")
        X = np.asarray(X)
        if X.ndim != 3 or X.shape[1] != self.window_samples_:
            raise ValueError(f"expected windows of {self.window_samples_} samples, got shape {X.shape}")
        return extract_features_batch(X, self.sample_rate_hz)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)


# --------------------------------------------------------------- featurization


@dataclass(frozen=True)
class WindowFeatures:
    """Array form of a featurized recording (one row per complete window).

    ``labels`` holds the canonical label index of the slot containing the
    window centre, or -1 when that slot has no annotation.
    """

    X: np.ndarray
    start_ms: np.ndarray
    center_day: np.ndarray
    center_slot: np.ndarray
    labels: np.ndarray
    n_dropped: int = 0

    def __len__(self):
        return int(self.start_ms.size)

    def subset(self, mask) -> "WindowFeatures":
        return WindowFeatures(self.X[mask], self.start_ms[mask], self.center_day[mask],
                              self.center_slot[mask], self.labels[mask], self.n_dropped)


def compute_window_features(recording: Recording, spec: WindowSpec = WindowSpec(),
                            batch_size: int = 512) -> WindowFeatures:
    windows = window_signal(recording, spec)
    X = np.empty((len(windows), N_FEATURES))
    for sl, data in windows.batches(batch_size):
        X[sl] = extract_features_batch(data, recording.sample_rate_hz)
    center = windows.start_ms + spec.window_seconds * 1000 // 2
    day = center // MS_PER_DAY
    slot = (center % MS_PER_DAY) // (SLOT_MINUTES * MS_PER_MINUTE) * SLOT_MINUTES
    lookup = {(epoch_day(r.day), r.start_minute): int(r.label) for r in recording.annotations}
    labels = np.array([lookup.get((int(d), int(s)), -1) for d, s in zip(day, slot)], dtype=np.int64)
    return WindowFeatures(X, windows.start_ms, day, slot, labels, windows.n_dropped)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    window_start_ms: int
    label: AnnotationLabel
    segment_id: str


def segment_lookup(segments) -> dict:
    """Map ``(epoch_day, slot_minute)`` to the id of the segment containing it."""
    lookup = {}
    for seg in segments:
        d = epoch_day(seg.day)
        for minute in range(seg.start_minute, seg.end_minute, SLOT_MINUTES):
            lookup[(d, minute)] = seg.segment_id
    return lookup


def featurize_recording(recording: Recording, spec: WindowSpec, segments: Sequence) -> list:
    """Labelled, segment-tagged feature vectors of every complete window.

    A window takes the label of the annotation slot containing its centre and
    belongs to the segment containing that centre; windows whose centre slot
    is unannotated are dropped.
    """
    table = compute_window_features(recording, spec)
    lookup = segment_lookup(segments)
    vectors = []
    for i in np.flatnonzero(table.labels >= 0):
        key = (int(table.center_day[i]), int(table.center_slot[i]))
        seg = lookup.get(key)
        if seg is None:
            continue
        vectors.append(FeatureVector(table.X[i], int(table.start_ms[i]),
                                     AnnotationLabel(int(table.labels[i])), seg))
    return vectors


def write_features_csv(vectors: Sequence[FeatureVector], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["window_start_ms", "segment_id", "label"] + [f"f{i:02d}" for i in range(N_FEATURES)])
        for v in vectors:
            writer.writerow([v.window_start_ms, v.segment_id, v.label.name] + [repr(float(x)) for x in v.values])


def read_features_csv(path) -> list:
    vectors = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["window_start_ms", "segment_id", "label"] or len(header) != 3 + N_FEATURES:
            raise ValueError(f"{path}: unexpected feature header")
        for row in reader:
            vectors.append(FeatureVector(np.array([float(x) for x in row[3:]]), int(row[0]),
                                         AnnotationLabel.parse(row[2]), row[1]))
    return vectors

