"""Synthetic recordings with known behavioural regimes.

Each regime owns a behaviour distribution and the daily intervals in which
it is active. Every day, every scheduled interval draws its own behaviour
mix from ``Dirichlet(concentration * distribution)``; one label per
five-minute slot is sampled from that mix and a 3-axis signal is emitted
from a per-behaviour motion model.
"""
from __future__ import annotations

import datetime as dt
import json
import pathlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._seeding import derive_seed
from .dataset import (
    DAY_END_MINUTE,
    DAY_START_MINUTE,
    MS_PER_DAY,
    MS_PER_MINUTE,
    N_LABELS,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    AnnotationLabel,
    AnnotationRecord,
    Recording,
    epoch_day,
)

GRAVITY = 9.81
CHUNK_SECONDS = 30
SIGNAL_DECIMALS = 4


class SynthesisSpecError(ValueError):
    """Invalid regime or synthesis configuration."""


@dataclass(frozen=True)
class RegimeSpec:
    """One behavioural regime.

    ``daily_schedule`` lists the ``(start_minute, end_minute, regime_id)``
    intervals in which this regime is active; the union over all regimes of
    a subject must tile 08:00-18:00.
    """

    regime_id: int
    behavior_distribution: tuple
    dirichlet_concentration: float
    daily_schedule: tuple

    def __post_init__(self):
        dist = tuple(float(p) for p in self.behavior_distribution)
        schedule = tuple(tuple(int(v) for v in item) for item in self.daily_schedule)
        object.__setattr__(self, "behavior_distribution", dist)
        object.__setattr__(self, "daily_schedule", schedule)
        object.__setattr__(self, "dirichlet_concentration", float(self.dirichlet_concentration))
        if len(dist) != N_LABELS or min(dist) < 0:
            raise SynthesisSpecError(f"regime {self.regime_id}: behavior_distribution must be 7 nonnegative values")
        if abs(sum(dist) - 1.0) > 1e-9:
            raise SynthesisSpecError(f"regime {self.regime_id}: behavior_distribution sums to {sum(dist)!r}, not 1")
        if not self.dirichlet_concentration > 0:
            raise SynthesisSpecError(f"regime {self.regime_id}: dirichlet_concentration must be positive")
        for start, end, rid in schedule:
            if rid != self.regime_id:
                raise SynthesisSpecError(
                    f"regime {self.regime_id}: schedule entry ({start}, {end}, {rid}) names another regime"
                )


def check_schedule(regimes: Sequence[RegimeSpec]) -> np.ndarray:
    """Validate the combined schedule; return the regime id of every day slot."""
    if not regimes:
        raise SynthesisSpecError("at least one regime is required")
    ids = [r.regime_id for r in regimes]
    if len(set(ids)) != len(ids):
        raise SynthesisSpecError(f"duplicate regime ids in {ids}")
    slot_regime = np.full(SLOTS_PER_DAY, -1, dtype=np.int64)
    for regime in regimes:
        for start, end, rid in regime.daily_schedule:
            if start % SLOT_MINUTES or end % SLOT_MINUTES:
                raise SynthesisSpecError(f"schedule interval ({start}, {end}) is off the {SLOT_MINUTES}-minute grid")
            if not DAY_START_MINUTE <= start < end <= DAY_END_MINUTE:
                raise SynthesisSpecError(f"schedule interval ({start}, {end}) outside the day window")
            a = (start - DAY_START_MINUTE) // SLOT_MINUTES
            b = (end - DAY_START_MINUTE) // SLOT_MINUTES
            if (slot_regime[a:b] >= 0).any():
                raise SynthesisSpecError(f"schedule interval ({start}, {end}) overlaps another interval")
            slot_regime[a:b] = rid
    missing = np.flatnonzero(slot_regime < 0)
    if missing.size:
        minute = DAY_START_MINUTE + int(missing[0]) * SLOT_MINUTES
        raise SynthesisSpecError(f"schedule gap: no regime covers minute {minute}")
    return slot_regime


def _draw_mix(rng, distribution, concentration):
    dist = np.asarray(distribution)
    support = np.flatnonzero(dist > 0)
    theta = np.zeros(N_LABELS)
    if support.size == 1:
        theta[support[0]] = 1.0
    else:
        theta[support] = rng.dirichlet(concentration * dist[support])
    return theta


# ---------------------------------------------------------------- motion model


def _noise(rng, shape, sigma):
    return rng.normal(0.0, sigma, size=shape)


def _band_noise(rng, m, n, rate, sigma, low=0.5, high=4.0):
    white = rng.normal(size=(m, 3, n))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    spec[..., (freqs < low) | (freqs > high)] = 0.0
    band = np.fft.irfft(spec, n=n, axis=-1)
    band *= sigma / band.std(axis=-1, keepdims=True)
    return band.transpose(0, 2, 1)


def _gait(rng, m, n, rate, amplitude):
    t = np.arange(n) / rate
    amp = amplitude * rng.lognormal(0.0, 0.2, size=(m, 1))
    freq = 2.0 + rng.normal(0.0, 0.05, size=(m, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(m, 1))
    out = _noise(rng, (m, n, 3), 0.3)
    out[..., 0] += amp * np.sin(2 * np.pi * freq * t + phase)
    out[..., 1] += 0.5 * amp * np.sin(2 * np.pi * freq * t + phase + np.pi / 2)
    out[..., 2] += 0.3 * amp * np.sin(4 * np.pi * freq * t + phase)
    return out


def _bursts(rng, out, rate, per_second, amplitude, length, shape):
    m, n, _ = out.shape
    counts = rng.poisson(per_second * n / rate, size=m)
    for i in np.flatnonzero(counts):
        starts = rng.integers(0, n - length, size=counts[i])
        for s in starts:
            if shape == "burst":
                out[i, s:s + length] += rng.normal(0.0, amplitude, size=3) * np.hanning(length)[:, None]
            else:
                axis = rng.integers(0, 3)
                sign = rng.choice((-1.0, 1.0))
                out[i, s:s + length, axis] += sign * amplitude * np.bartlett(length + 2)[1:-1]
    return out


def behavior_signal(behavior: int, m: int, n: int, rate: float, rng) -> np.ndarray:
    """``m`` chunks of ``n`` samples of gravity-free motion for one behaviour."""
    b = AnnotationLabel(behavior)
    if b is AnnotationLabel.apathy:
        return _noise(rng, (m, n, 3), 0.05)
    if b is AnnotationLabel.normal:
        out = _noise(rng, (m, n, 3), 0.3)
        return _bursts(rng, out, rate, 1 / 15, 1.5, int(rate), "burst")
    if b is AnnotationLabel.pacing:
        return _gait(rng, m, n, rate, 2.0)
    if b is AnnotationLabel.locomotion_intent:
        return _gait(rng, m, n, rate, 1.2)
    if b is AnnotationLabel.restlessness:
        return _band_noise(rng, m, n, rate, 0.8)
    if b is AnnotationLabel.mannerisms:
        t = np.arange(n) / rate
        out = _noise(rng, (m, n, 3), 0.05)
        amp = rng.lognormal(0.0, 0.2, size=(m, 1))
        phase = rng.uniform(0, 2 * np.pi, size=(m, 1))
        out[..., 0] += amp * np.sin(2 * np.pi * 1.0 * t + phase)
        return out
    out = _noise(rng, (m, n, 3), 0.3)
    return _bursts(rng, out, rate, 1 / 5, 8.0, max(int(0.1 * rate), 1), "spike")


# -------------------------------------------------------------------- generator


def generate_synthetic_recording(spec: Sequence[RegimeSpec], n_days: int, seed: int, *,
                                 subject_id: str = "synthetic",
                                 start_date: dt.date = dt.date(2021, 6, 1),
                                 sample_rate_hz: float = 50.0,
                                 label_fidelity: float = 1.0,
                                 intensity_jitter: float = 0.0):
    """Generate one recording and its per-slot regime ground truth.

    ``label_fidelity`` is the probability that a 30-second chunk of a slot
    moves like the slot's annotated behaviour; otherwise the chunk follows
    a behaviour drawn from the same day-specific mix. The motion (not gravity)
    of each slot is scaled by one ``lognormal(0, intensity_jitter)`` gain.

    Returns ``(recording, truth)`` with ``truth[(date, start_minute)] = regime_id``.
    """
    if int(n_days) < 1:
        raise SynthesisSpecError("n_days must be >= 1")
    if not 0.0 <= label_fidelity <= 1.0:
        raise SynthesisSpecError("label_fidelity must lie in [0, 1]")
    slot_regime = check_schedule(spec)
    regimes = {r.regime_id: r for r in spec}
    chunk_n = CHUNK_SECONDS * sample_rate_hz
    if chunk_n != int(chunk_n):
        raise SynthesisSpecError(f"sample rate {sample_rate_hz} does not give whole samples per chunk")
    chunk_n = int(chunk_n)
    chunks_per_slot = SLOT_MINUTES * 60 // CHUNK_SECONDS
    n_chunks = SLOTS_PER_DAY * chunks_per_slot
    day_samples = n_chunks * chunk_n
    step_ms = 1000.0 / sample_rate_hz
    offsets = np.round(np.arange(day_samples) * step_ms).astype(np.int64)

    # contiguous runs of the schedule; each gets its own daily mix
    runs = []
    a = 0
    for i in range(1, SLOTS_PER_DAY + 1):
        if i == SLOTS_PER_DAY or slot_regime[i] != slot_regime[a]:
            runs.append((a, i, int(slot_regime[a])))
            a = i

    rng = np.random.default_rng(seed)
    timestamps, signals, annotations, truth = [], [], [], {}
    for d in range(int(n_days)):
        day = start_date + dt.timedelta(days=d)
        slot_labels = np.empty(SLOTS_PER_DAY, dtype=np.int64)
        slot_theta = np.empty((SLOTS_PER_DAY, N_LABELS))
        for a, b, rid in runs:
            regime = regimes[rid]
            theta = _draw_mix(rng, regime.behavior_distribution, regime.dirichlet_concentration)
            slot_labels[a:b] = rng.choice(N_LABELS, size=b - a, p=theta)
            slot_theta[a:b] = theta
        # chunk behaviours
        chunk_labels = np.repeat(slot_labels, chunks_per_slot)
        swap = rng.random(n_chunks) >= label_fidelity
        if swap.any():
            thetas = np.repeat(slot_theta, chunks_per_slot, axis=0)[swap]
            cum = np.cumsum(thetas, axis=1)
            u = rng.random(swap.sum())[:, None]
            chunk_labels = chunk_labels.copy()
            chunk_labels[swap] = np.minimum((u > cum).sum(axis=1), N_LABELS - 1)
        sig = np.empty((n_chunks, chunk_n, 3))
        for behavior in range(N_LABELS):
            idx = np.flatnonzero(chunk_labels == behavior)
            if idx.size:
                sig[idx] = behavior_signal(behavior, idx.size, chunk_n, sample_rate_hz, rng)
        if intensity_jitter > 0:
            gain = rng.lognormal(0.0, intensity_jitter, size=SLOTS_PER_DAY)
            sig *= np.repeat(gain, chunks_per_slot)[:, None, None]
        sig = sig.reshape(day_samples, 3)
        sig[:, 2] += GRAVITY
        signals.append(np.round(sig, SIGNAL_DECIMALS))
        day_ms = epoch_day(day) * MS_PER_DAY + DAY_START_MINUTE * MS_PER_MINUTE
        timestamps.append(day_ms + offsets)
        for s in range(SLOTS_PER_DAY):
            minute = DAY_START_MINUTE + s * SLOT_MINUTES
            annotations.append(AnnotationRecord(day, minute, AnnotationLabel(int(slot_labels[s]))))
            truth[(day, minute)] = int(slot_regime[s])

    recording = Recording(
        subject_id=subject_id,
        timestamps_ms=np.concatenate(timestamps),
        acc=np.concatenate(signals),
        annotations=tuple(annotations),
        sample_rate_hz=sample_rate_hz,
    )
    return recording, truth


# ------------------------------------------------------------ dataset configs


@dataclass(frozen=True)
class SubjectSpec:
    subject_id: str
    regimes: tuple
    label_fidelity: float = 1.0
    intensity_jitter: float = 0.0


@dataclass(frozen=True)
class SynthesisConfig:
    """A multi-subject synthetic dataset description (serialised as JSON)."""

    subjects: tuple
    n_days: int = 20
    start_date: dt.date = dt.date(2021, 6, 1)
    sample_rate_hz: float = 50.0

    def generate(self, subject: SubjectSpec, seed: int, n_days: int | None = None):
        return generate_synthetic_recording(
            subject.regimes,
            self.n_days if n_days is None else n_days,
            derive_seed(seed, "synth", subject.subject_id),
            subject_id=subject.subject_id,
            start_date=self.start_date,
            sample_rate_hz=self.sample_rate_hz,
            label_fidelity=subject.label_fidelity,
            intensity_jitter=subject.intensity_jitter,
        )

    def to_json(self) -> str:
        payload = {
            "n_days": self.n_days,
            "start_date": self.start_date.isoformat(),
            "sample_rate_hz": self.sample_rate_hz,
            "subjects": [
                {
                    "subject_id": s.subject_id,
                    "label_fidelity": s.label_fidelity,
                    "intensity_jitter": s.intensity_jitter,
                    "regimes": [
                        {
                            "regime_id": r.regime_id,
                            "behavior_distribution": list(r.behavior_distribution),
                            "dirichlet_concentration": r.dirichlet_concentration,
                            "daily_schedule": [list(item) for item in r.daily_schedule],
                        }
                        for r in s.regimes
                    ],
                }
                for s in self.subjects
            ],
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SynthesisConfig":
        try:
            payload = json.loads(text)
            subjects = []
            for s in payload["subjects"]:
                regimes = tuple(
                    RegimeSpec(
                        regime_id=int(r["regime_id"]),
                        behavior_distribution=tuple(r["behavior_distribution"]),
                        dirichlet_concentration=r["dirichlet_concentration"],
                        daily_schedule=tuple(tuple(item) for item in r["daily_schedule"]),
                    )
                    for r in s["regimes"]
                )
                check_schedule(regimes)
                subjects.append(SubjectSpec(str(s["subject_id"]), regimes,
                                            float(s.get("label_fidelity", 1.0)),
                                            float(s.get("intensity_jitter", 0.0))))
            return cls(
                subjects=tuple(subjects),
                n_days=int(payload.get("n_days", 20)),
                start_date=dt.date.fromisoformat(payload.get("start_date", "2021-06-01")),
                sample_rate_hz=float(payload.get("sample_rate_hz", 50.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SynthesisSpecError):
                raise
            raise SynthesisSpecError(f"invalid synthesis spec: {exc}") from None

    @classmethod
    def load(cls, path) -> "SynthesisConfig":
        return cls.from_json(pathlib.Path(path).read_text(encoding="utf-8"))


def _mix(dominant, secondary, weights=(0.6, 0.25)):
    p = np.full(N_LABELS, (1.0 - sum(weights)) / (N_LABELS - 2))
    p[int(dominant)] = weights[0]
    p[int(secondary)] = weights[1]
    p /= p.sum()
    return tuple(float(v) for v in p)


L = AnnotationLabel

# subject -> (breakpoints, [(dominant, secondary) per regime])
_DEFAULT_LAYOUT = {
    "X110": ((480, 600, 720, 870, 1080), [(L.apathy, L.normal), (L.normal, L.mannerisms),
                                          (L.pacing, L.locomotion_intent), (L.mannerisms, L.apathy)]),
    "X111": ((480, 570, 690, 900, 1080), [(L.normal, L.apathy), (L.pacing, L.restlessness),
                                          (L.apathy, L.mannerisms), (L.restlessness, L.pacing)]),
    "X113": ((480, 630, 750, 900, 1080), [(L.mannerisms, L.normal), (L.apathy, L.normal),
                                          (L.locomotion_intent, L.pacing), (L.normal, L.aggression)]),
    "X114": ((480, 540, 720, 840, 1080), [(L.restlessness, L.normal), (L.apathy, L.mannerisms),
                                          (L.normal, L.pacing), (L.aggression, L.restlessness)]),
    "X121": ((480, 600, 780, 930, 1080), [(L.apathy, L.mannerisms), (L.mannerisms, L.normal),
                                          (L.normal, L.apathy), (L.pacing, L.locomotion_intent)]),
    "X122": ((480, 585, 705, 855, 1080), [(L.normal, L.mannerisms), (L.locomotion_intent, L.normal),
                                          (L.apathy, L.restlessness), (L.mannerisms, L.pacing)]),
    "X124": ((480, 660, 780, 960, 1080), [(L.apathy, L.normal), (L.restlessness, L.aggression),
                                          (L.mannerisms, L.apathy), (L.pacing, L.normal)]),
    "X126": ((480, 615, 735, 885, 1080), [(L.apathy, L.mannerisms), (L.normal, L.apathy),
                                          (L.mannerisms, L.restlessness), (L.locomotion_intent, L.pacing)]),
}

DEFAULT_CONCENTRATION = 2.0
DEFAULT_LABEL_FIDELITY = 1.0
DEFAULT_INTENSITY_JITTER = 0.0


def default_synthesis_config(n_days: int = 20, concentration: float = DEFAULT_CONCENTRATION,
                             label_fidelity: float = DEFAULT_LABEL_FIDELITY,
                             intensity_jitter: float = DEFAULT_INTENSITY_JITTER) -> SynthesisConfig:
    """Eight subjects with four regimes each, loosely shaped like a care-home day."""
    subjects = []
    for subject_id, (breaks, mixes) in _DEFAULT_LAYOUT.items():
        regimes = tuple(
            RegimeSpec(i, _mix(dom, sec), concentration, ((breaks[i], breaks[i + 1], i),))
            for i, (dom, sec) in enumerate(mixes)
        )
        subjects.append(SubjectSpec(subject_id, regimes, label_fidelity, intensity_jitter))
    return SynthesisConfig(subjects=tuple(subjects), n_days=n_days)


def one_hot_regimes(labels: Sequence[int], breakpoints: Sequence[int],
                    concentration: float = 1e6) -> tuple:
    """Regimes with degenerate (one-hot) behaviour distributions."""
    regimes = []
    for i, label in enumerate(labels):
        dist = [0.0] * N_LABELS
        dist[int(label)] = 1.0
        regimes.append(RegimeSpec(i, tuple(dist), concentration,
                                  ((breakpoints[i], breakpoints[i + 1], i),)))
    return tuple(regimes)
