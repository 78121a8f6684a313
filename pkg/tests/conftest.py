import datetime as dt

import numpy as np
import pytest

from bpdhar.dataset import AnnotationLabel, AnnotationRecord, Recording
from bpdhar.synthesis import generate_synthetic_recording, one_hot_regimes

DAY0 = dt.date(2021, 6, 1)


def flat_recording(n_days=1, rate=2.0, labels=None, subject_id="T"):
    """Constant-gravity recording covering 08:00-18:00 on ``n_days`` days.

    ``labels`` is one label per slot (120 per day) or a single label.
    """
    step = 1000.0 / rate
    per_day = int(600 * 60 * rate)
    ts, annotations = [], []
    for d in range(n_days):
        day = DAY0 + dt.timedelta(days=d)
        base = (day - dt.date(1970, 1, 1)).days * 86_400_000 + 480 * 60_000
        ts.append(base + np.round(np.arange(per_day) * step).astype(np.int64))
        for s in range(120):
            label = labels if labels is None or isinstance(labels, (int, AnnotationLabel)) else labels[s]
            if label is not None:
                annotations.append(AnnotationRecord(day, 480 + 5 * s, AnnotationLabel(label)))
    ts = np.concatenate(ts)
    acc = np.zeros((ts.size, 3))
    acc[:, 2] = 9.81
    return Recording(subject_id, ts, acc, tuple(annotations), rate)


def two_regime_recording(n_days=3, seed=0, rate=2.0, split=780):
    regimes = one_hot_regimes([AnnotationLabel.apathy, AnnotationLabel.pacing], [480, split, 1080])
    return generate_synthetic_recording(regimes, n_days, seed, subject_id="S2", sample_rate_hz=rate)


@pytest.fixture(scope="session")
def two_regime():
    return two_regime_recording()


# ------------------------------------------------------------ acceptance report

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, name = marker.args
    detail = dict(report.user_properties).get("detail", "")
    entry = _CRITERIA.setdefault(number, {"name": name, "status": "PASS", "detail": ""})
    if report.failed:
        entry["status"] = "FAIL"
    elif report.skipped:
        entry["status"] = "SKIP"
    if detail:
        entry["detail"] = detail


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        line = f"criterion {number} {entry['status']}: {entry['name']}"
        if entry["detail"]:
            line += f" ({entry['detail']})"
        terminalreporter.write_line(line)
