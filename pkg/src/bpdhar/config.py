"""Flat ``key = value`` run configuration.

Blank lines and lines starting with ``#`` are ignored. List values are
comma separated. Command-line flags override file values.

Keys::

    data_dir              dataset directory (signal/annotation CSVs)
    out_dir               output directory
    seed                  master seed
    jobs                  worker processes (default: available cores)
    strategies            kmeans,time_based
    ks                    e.g. 1-20 or 1,2,5
    segment_lengths_min   5,10,15,30,60,120
    classifier_kinds      majority,naive_bayes,svm
    subjects              subject ids; empty = every subject in data_dir
    repetitions           10
    train_fraction        0.7
    window_seconds        60
    overlap_fraction      0.5
    synth_spec            JSON synthesis spec; empty = built-in 8-subject spec
    days                  days per synthetic subject
    k                     BPD count for ``cluster``
    segment_min           segment length for ``featurize`` and ``cluster``
    strategy              BPD strategy for ``cluster``
    report_cell           strategy,k,segment_min,classifier for the confusion plot
    log_level             WARNING, INFO, DEBUG
"""
from __future__ import annotations

import dataclasses
import os
import pathlib
from dataclasses import dataclass

from .bpd import STRATEGIES
from .classifiers import ClassifierKind
from .experiments import DEFAULT_SEGMENT_LENGTHS, ExperimentGrid
from .features import WindowSpec


class ConfigError(ValueError):
    """Invalid configuration; the CLI exits with status 2."""


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


def _int_list(text: str) -> tuple:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _str_list(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


@dataclass
class RunConfig:
    data_dir: str = "data"
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 0
    strategies: tuple = STRATEGIES
    ks: tuple = tuple(range(1, 21))
    segment_lengths_min: tuple = DEFAULT_SEGMENT_LENGTHS
    classifier_kinds: tuple = tuple(k.value for k in ClassifierKind)
    subjects: tuple = ()
    repetitions: int = 10
    train_fraction: float = 0.7
    window_seconds: int = 60
    overlap_fraction: float = 0.5
    synth_spec: str = ""
    days: int = 5
    k: int = 4
    segment_min: int = 30
    strategy: str = "kmeans"
    report_cell: str = ""
    log_level: str = "WARNING"

    def __post_init__(self):
        if self.jobs <= 0:
            self.jobs = available_cores()

    # ------------------------------------------------------------ parsing

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    def set(self, key: str, raw: str) -> None:
        if key not in self.field_names():
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, key)
        try:
            if key in ("ks", "segment_lengths_min"):
                value = _int_list(raw)
            elif isinstance(current, tuple):
                value = _str_list(raw)
            elif isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw.strip()
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        setattr(self, key, value)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cfg = cls()
        cfg.update_from_file(path)
        return cfg

    def update_from_file(self, path) -> None:
        path = pathlib.Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, value = line.split("=", 1)
            try:
                self.set(key.strip(), value.strip())
            except ConfigError as exc:
                raise ConfigError(f"{path}:{n}: {exc}") from None

    def dumps(self) -> str:
        lines = []
        for name in self.field_names():
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{name} = {value}")
        return "\n".join(lines) + "\n"

    # ---------------------------------------------------------- derived

    def validate(self) -> None:
        self.grid()
        self.window_spec()
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.days < 1:
            raise ConfigError("days must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            raise ConfigError(f"unknown log level {self.log_level!r}")

    def grid(self, subjects=None) -> ExperimentGrid:
        try:
            return ExperimentGrid(
                strategies=self.strategies,
                ks=self.ks,
                segment_lengths_min=self.segment_lengths_min,
                classifier_kinds=self.classifier_kinds,
                subjects=self.subjects if subjects is None else subjects,
                repetitions=self.repetitions,
                train_fraction=self.train_fraction,
                master_seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def window_spec(self) -> WindowSpec:
        try:
            return WindowSpec(self.window_seconds, self.overlap_fraction)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
