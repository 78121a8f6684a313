"""Recording schema, CSV input/output and day segmentation.

A recording holds one subject's wrist acceleration stream (timestamps in
epoch milliseconds, three axes in m/s^2) together with the expert
annotation log on a five-minute grid between 08:00 and 18:00.
"""
from __future__ import annotations

import csv
import datetime as dt
import enum
import functools
import pathlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

N_LABELS = 7
SLOT_MINUTES = 5
DAY_START_MINUTE = 8 * 60
DAY_END_MINUTE = 18 * 60
DAY_WINDOW_MINUTES = DAY_END_MINUTE - DAY_START_MINUTE
SLOTS_PER_DAY = DAY_WINDOW_MINUTES // SLOT_MINUTES
MS_PER_MINUTE = 60_000
MS_PER_DAY = 24 * 60 * MS_PER_MINUTE

SIGNAL_HEADER = ("timestamp_ms", "ax", "ay", "az")
ANNOTATION_HEADER = ("date", "start_minute", "label")
GROUND_TRUTH_HEADER = ("date", "start_minute", "regime_id")

_EPOCH = dt.date(1970, 1, 1)


class AnnotationLabel(enum.IntEnum):
    """The seven annotated behaviours, in canonical order."""

    apathy = 0
    restlessness = 1
    mannerisms = 2
    pacing = 3
    aggression = 4
    locomotion_intent = 5
    normal = 6

    @classmethod
    def parse(cls, value) -> "AnnotationLabel":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().lower()]
            except KeyError:
                raise ValueError(f"unknown annotation label {value!r}") from None
        try:
            return cls(int(value))
        except ValueError:
            raise ValueError(f"unknown annotation label {value!r}") from None


LABEL_NAMES = tuple(label.name for label in AnnotationLabel)


class RecordingFormatError(ValueError):
    """A recording file could not be parsed."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class RecordingValidationError(ValueError):
    """Parsed data violates a recording invariant."""


def date_from_epoch_day(n: int) -> dt.date:
    return _EPOCH + dt.timedelta(days=int(n))


def epoch_day(day: dt.date) -> int:
    return (day - _EPOCH).days


def check_slot_minute(start_minute: int) -> None:
    if start_minute % SLOT_MINUTES != 0:
        raise RecordingValidationError(
            f"annotation at minute {start_minute} is off the {SLOT_MINUTES}-minute grid"
        )
    if not DAY_START_MINUTE <= start_minute <= DAY_END_MINUTE - SLOT_MINUTES:
        raise RecordingValidationError(
            f"annotation at minute {start_minute} outside the day window "
            f"[{DAY_START_MINUTE}, {DAY_END_MINUTE - SLOT_MINUTES}]"
        )


@dataclass(frozen=True, order=True)
class AnnotationRecord:
    day: dt.date
    start_minute: int
    label: AnnotationLabel

    def __post_init__(self):
        object.__setattr__(self, "start_minute", int(self.start_minute))
        object.__setattr__(self, "label", AnnotationLabel.parse(self.label))
        check_slot_minute(self.start_minute)

    @property
    def start_ms(self) -> int:
        return epoch_day(self.day) * MS_PER_DAY + self.start_minute * MS_PER_MINUTE


@dataclass(frozen=True, eq=False)
class Recording:
    """One subject's acceleration stream plus annotation log.

    ``timestamps_ms`` is an int64 vector, ``acc`` an ``(n, 3)`` float64
    matrix. Both are made read-only on construction.
    """

    subject_id: str
    timestamps_ms: np.ndarray
    acc: np.ndarray
    annotations: tuple = ()
    sample_rate_hz: float = 50.0

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps_ms, dtype=np.int64)
        acc = np.ascontiguousarray(self.acc, dtype=np.float64)
        if acc.ndim != 2 or acc.shape[1] != 3 or acc.shape[0] != ts.shape[0]:
            raise RecordingValidationError(
                f"acc must have shape (n, 3) matching {ts.shape[0]} timestamps, got {acc.shape}"
            )
        if not self.sample_rate_hz > 0:
            raise RecordingValidationError("sample_rate_hz must be positive")
        if ts.size > 1:
            bad = np.flatnonzero(np.diff(ts) <= 0)
            if bad.size:
                i = int(bad[0]) + 1
                raise RecordingValidationError(
                    f"timestamps not strictly increasing at sample {i} "
                    f"({ts[i - 1]} -> {ts[i]})"
                )
        ts.flags.writeable = False
        acc.flags.writeable = False
        annotations = tuple(sorted(self.annotations))
        seen = set()
        for rec in annotations:
            key = (rec.day, rec.start_minute)
            if key in seen:
                raise RecordingValidationError(
                    f"duplicate annotation for {rec.day.isoformat()} minute {rec.start_minute}"
                )
            seen.add(key)
        object.__setattr__(self, "timestamps_ms", ts)
        object.__setattr__(self, "acc", acc)
        object.__setattr__(self, "annotations", annotations)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.sample_rate_hz == other.sample_rate_hz
            and self.annotations == other.annotations
            and np.array_equal(self.timestamps_ms, other.timestamps_ms)
            and np.array_equal(self.acc, other.acc)
        )

    __hash__ = None

    @property
    def step_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz

    @functools.cached_property
    def days(self) -> tuple:
        """Sorted recorded days: any day with samples or annotations."""
        sample_days = np.unique(self.timestamps_ms // MS_PER_DAY)
        days = {date_from_epoch_day(d) for d in sample_days}
        days.update(rec.day for rec in self.annotations)
        return tuple(sorted(days))

    @functools.cached_property
    def day_index_ranges(self) -> dict:
        """Map each sample day to its ``[start, stop)`` sample index range."""
        day_of = self.timestamps_ms // MS_PER_DAY
        edges = np.flatnonzero(np.diff(day_of)) + 1
        starts = np.concatenate([[0], edges]) if day_of.size else np.array([], dtype=int)
        stops = np.concatenate([edges, [day_of.size]]) if day_of.size else np.array([], dtype=int)
        return {
            date_from_epoch_day(day_of[a]): (int(a), int(b)) for a, b in zip(starts, stops)
        }

    def gap_mask(self) -> np.ndarray:
        """Boolean of length ``n - 1``: True where consecutive samples are further
        apart than 1.5 nominal steps."""
        return np.diff(self.timestamps_ms) > 1.5 * self.step_ms

    def covered(self, start_ms: np.ndarray, stop_ms: np.ndarray) -> np.ndarray:
        """For each interval ``[start, stop)``, whether samples cover it without a gap."""
        start_ms = np.asarray(start_ms, dtype=np.int64)
        stop_ms = np.asarray(stop_ms, dtype=np.int64)
        ts = self.timestamps_ms
        if ts.size == 0:
            return np.zeros(start_ms.shape, dtype=bool)
        step = self.step_ms
        gaps = np.concatenate([[0], np.cumsum(self.gap_mask())])
        first = np.searchsorted(ts, start_ms, side="left")
        last = np.searchsorted(ts, stop_ms, side="left") - 1
        ok = (first < ts.size) & (last >= first)
        first_c = np.minimum(first, ts.size - 1)
        last_c = np.clip(last, 0, ts.size - 1)
        ok &= ts[first_c] - start_ms < step
        ok &= stop_ms - ts[last_c] <= step + 0.5
        ok &= gaps[last_c] == gaps[first_c]
        return ok

    @property
    def coverage_gaps(self) -> tuple:
        """Annotations whose five-minute interval is not fully covered by samples."""
        if not self.annotations:
            return ()
        starts = np.array([rec.start_ms for rec in self.annotations], dtype=np.int64)
        ok = self.covered(starts, starts + SLOT_MINUTES * MS_PER_MINUTE)
        return tuple(rec for rec, good in zip(self.annotations, ok) if not good)


def annotation_arrays(annotations: Iterable[AnnotationRecord]):
    """Return ``(epoch_days, start_minutes, labels)`` int arrays."""
    annotations = list(annotations)
    days = np.array([epoch_day(r.day) for r in annotations], dtype=np.int64)
    minutes = np.array([r.start_minute for r in annotations], dtype=np.int64)
    labels = np.array([int(r.label) for r in annotations], dtype=np.int64)
    return days, minutes, labels


# --------------------------------------------------------------------- CSV I/O


def _default_annotation_path(signal_path: pathlib.Path) -> pathlib.Path:
    name = signal_path.name
    if name.endswith(".signal.csv"):
        return signal_path.with_name(name[: -len(".signal.csv")] + ".annotations.csv")
    return signal_path.with_name(signal_path.stem + ".annotations.csv")


def _subject_from_path(signal_path: pathlib.Path) -> str:
    name = signal_path.name
    if name.endswith(".signal.csv"):
        return name[: -len(".signal.csv")]
    return signal_path.stem


def _check_header(path, first_line, expected):
    got = tuple(col.strip() for col in first_line.rstrip("\r\n").split(","))
    if got != expected:
        raise RecordingFormatError(path, 1, f"expected header {','.join(expected)!r}, got {first_line.strip()!r}")


def _locate_bad_signal_row(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            lineno = reader.line_num
            if len(row) != 4:
                raise RecordingFormatError(path, lineno, f"expected 4 fields, got {len(row)}")
            try:
                int(row[0])
            except ValueError:
                raise RecordingFormatError(path, lineno, f"bad timestamp {row[0]!r}") from None
            for value in row[1:]:
                try:
                    v = float(value)
                except ValueError:
                    raise RecordingFormatError(path, lineno, f"bad acceleration value {value!r}") from None
                if not np.isfinite(v):
                    raise RecordingFormatError(path, lineno, f"non-finite acceleration value {value!r}")
    raise RecordingFormatError(path, 0, "unparseable signal file")


def read_signal_csv(path):
    path = pathlib.Path(path)
    with open(path, encoding="utf-8") as fh:
        _check_header(path, fh.readline(), SIGNAL_HEADER)
    try:
        frame = pd.read_csv(
            path,
            dtype={"timestamp_ms": "int64", "ax": "float64", "ay": "float64", "az": "float64"},
            float_precision="round_trip",
            keep_default_na=False,
            na_values=[],
        )
    except (ValueError, pd.errors.ParserError):
        _locate_bad_signal_row(path)
    values = frame[["ax", "ay", "az"]].to_numpy()
    if not np.isfinite(values).all():
        row = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise RecordingFormatError(path, row + 2, "non-finite acceleration value")
    return frame["timestamp_ms"].to_numpy(dtype=np.int64), values


def read_annotations_csv(path) -> list:
    path = pathlib.Path(path)
    records = []
    seen = {}
    with open(path, newline="", encoding="utf-8") as fh:
        _check_header(path, fh.readline(), ANNOTATION_HEADER)
        reader = csv.reader(fh)
        for row in reader:
            lineno = reader.line_num + 1
            if not row:
                continue
            if len(row) != 3:
                raise RecordingFormatError(path, lineno, f"expected 3 fields, got {len(row)}")
            try:
                day = dt.date.fromisoformat(row[0].strip())
                minute = int(row[1])
                label = AnnotationLabel.parse(row[2])
            except ValueError as exc:
                raise RecordingFormatError(path, lineno, str(exc)) from None
            try:
                rec = AnnotationRecord(day, minute, label)
            except RecordingValidationError as exc:
                raise RecordingValidationError(f"{path}:{lineno}: {exc}") from None
            key = (day, minute)
            if key in seen:
                raise RecordingValidationError(
                    f"{path}:{lineno}: duplicate annotation for {day.isoformat()} minute "
                    f"{minute} (first at line {seen[key]})"
                )
            seen[key] = lineno
            records.append(rec)
    return records


def load_recording(path, format="csv", *, annotations_path=None, subject_id=None,
                   sample_rate_hz=None) -> Recording:
    """Load a recording stored as ``<subject>.signal.csv`` + ``<subject>.annotations.csv``.

    The sample rate is inferred from the median sample spacing unless given.
    """
    if format != "csv":
        raise ValueError(f"unsupported recording format {format!r}")
    path = pathlib.Path(path)
    annotations_path = pathlib.Path(annotations_path) if annotations_path else _default_annotation_path(path)
    ts, acc = read_signal_csv(path)
    annotations = read_annotations_csv(annotations_path)
    if sample_rate_hz is None:
        sample_rate_hz = 50.0
        if ts.size > 1:
            sample_rate_hz = round(1000.0 / float(np.median(np.diff(ts))), 6)
    return Recording(
        subject_id=subject_id or _subject_from_path(path),
        timestamps_ms=ts,
        acc=acc,
        annotations=tuple(annotations),
        sample_rate_hz=sample_rate_hz,
    )


def write_recording(recording: Recording, directory) -> tuple:
    """Write the two CSV files of ``recording`` into ``directory``."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    signal_path = directory / f"{recording.subject_id}.signal.csv"
    annotations_path = directory / f"{recording.subject_id}.annotations.csv"
    frame = pd.DataFrame(
        {
            "timestamp_ms": recording.timestamps_ms,
            "ax": recording.acc[:, 0],
            "ay": recording.acc[:, 1],
            "az": recording.acc[:, 2],
        }
    )
    frame.to_csv(signal_path, index=False, lineterminator="\n")
    with open(annotations_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(ANNOTATION_HEADER) + "\n")
        for rec in recording.annotations:
            fh.write(f"{rec.day.isoformat()},{rec.start_minute},{rec.label.name}\n")
    return signal_path, annotations_path


def write_ground_truth(truth: dict, path) -> None:
    """``truth`` maps ``(date, start_minute)`` to a regime id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(GROUND_TRUTH_HEADER) + "\n")
        for (day, minute), regime in sorted(truth.items()):
            fh.write(f"{day.isoformat()},{minute},{regime}\n")


def read_ground_truth(path) -> dict:
    truth = {}
    with open(path, newline="", encoding="utf-8") as fh:
        _check_header(path, fh.readline(), GROUND_TRUTH_HEADER)
        reader = csv.reader(fh)
        for row in reader:
            if row:
                truth[(dt.date.fromisoformat(row[0]), int(row[1]))] = int(row[2])
    return truth


# ---------------------------------------------------------------- segmentation


@dataclass(frozen=True, order=True)
class TimeSegment:
    """A contiguous slice ``[start_minute, end_minute)`` of one specific day."""

    day: dt.date
    start_minute: int
    end_minute: int
    slots: tuple = field(default=(), compare=False)

    @property
    def segment_id(self) -> str:
        return f"{self.day.isoformat()}/{self.start_minute:04d}"


def check_segment_minutes(segment_minutes) -> int:
    if isinstance(segment_minutes, bool) or int(segment_minutes) != segment_minutes:
        raise ValueError(f"segment_minutes must be an integer, got {segment_minutes!r}")
    segment_minutes = int(segment_minutes)
    if segment_minutes <= 0 or segment_minutes % SLOT_MINUTES:
        raise ValueError(f"segment_minutes must be a positive multiple of {SLOT_MINUTES}, got {segment_minutes}")
    if DAY_WINDOW_MINUTES % segment_minutes:
        raise ValueError(f"segment_minutes={segment_minutes} does not divide the {DAY_WINDOW_MINUTES}-minute day")
    return segment_minutes


def segment_start(minute, segment_minutes: int):
    """Start minute of the segment containing ``minute`` (scalar or array)."""
    return DAY_START_MINUTE + ((np.asarray(minute) - DAY_START_MINUTE) // segment_minutes) * segment_minutes


def segment_days(days: Iterable[dt.date], annotations: Sequence[AnnotationRecord],
                 segment_minutes: int) -> list:
    segment_minutes = check_segment_minutes(segment_minutes)
    slots_by_day = {}
    for rec in annotations:
        slots_by_day.setdefault(rec.day, []).append(rec.start_minute)
    segments = []
    for day in sorted(set(days) | set(slots_by_day)):
        day_slots = sorted(slots_by_day.get(day, ()))
        for start in range(DAY_START_MINUTE, DAY_END_MINUTE, segment_minutes):
            end = start + segment_minutes
            contained = tuple(m for m in day_slots if start <= m < end)
            segments.append(TimeSegment(day, start, end, contained))
    return segments


def segment_day(recording: Recording, segment_minutes: int) -> list:
    """Tile every recorded day of ``recording`` into segments of ``segment_minutes``."""
    return segment_days(recording.days, recording.annotations, segment_minutes)
