import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bpdhar.experiments import (
    ExperimentGrid,
    cell_means,
    matched_points,
    prepare_subject,
    read_results_csv,
    run_grid,
    split_indices,
    split_train_test,
    subject_means,
    window_bpds,
    write_summary,
)

from conftest import two_regime_recording


@pytest.fixture(scope="module")
def subjects():
    return {
        "S2": prepare_subject(two_regime_recording(n_days=3, seed=0)[0]),
        "S3": prepare_subject(two_regime_recording(n_days=3, seed=1, split=630)[0]),
    }


def small_grid(**kw):
    base = dict(strategies=("kmeans", "time_based"), ks=(1, 2), segment_lengths_min=(30, 60),
                classifier_kinds=("majority", "naive_bayes", "svm"), subjects=("S2", "S3"),
                repetitions=2)
    base.update(kw)
    return ExperimentGrid(**base)


# ------------------------------------------------------------------- split


def test_split_sizes():
    train, test = split_train_test(list(range(10)), 0.7, 1)
    assert len(train) == 7 and len(test) == 3
    assert sorted(train + test) == list(range(10))


def test_split_deterministic():
    a = split_indices(100, 0.7, 42)
    b = split_indices(100, 0.7, 42)
    c = split_indices(100, 0.7, 43)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])


@given(st.integers(2, 500), st.floats(0.05, 0.95), st.integers(0, 2**32))
def test_split_partition(n, frac, seed):
    train, test = split_indices(n, frac, seed)
    assert train.size >= 1 and test.size >= 1
    assert np.intersect1d(train, test).size == 0
    assert np.union1d(train, test).tolist() == list(range(n))
    assert abs(train.size - n * frac) <= 1


def test_split_too_small():
    with pytest.raises(ValueError):
        split_indices(1, 0.7, 0)


# ------------------------------------------------------------------ grid


def test_row_count_arithmetic():
    grid = ExperimentGrid(subjects=tuple(f"P{i}" for i in range(8)))
    # (20 k x 6 segment lengths + 20 time-based) x 3 classifiers x 8 subjects x 10 reps
    assert grid.n_rows() == (20 * 6 + 20) * 3 * 8 * 10 == 33_600


@pytest.mark.parametrize("bad", [
    dict(segment_lengths_min=(35,)), dict(segment_lengths_min=(7,)), dict(ks=(0,)),
    dict(repetitions=0), dict(train_fraction=1.0), dict(strategies=("random",)),
    dict(classifier_kinds=("knn",)),
])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        ExperimentGrid(**bad)


def test_time_based_bpds_follow_clock(subjects):
    data = subjects["S2"]
    d = window_bpds(data, "time_based", 2, 0, 0)
    assert set(d) == {0, 1}
    assert (d[data.windows.center_slot < 60] == 0).all()


def test_k1_rows_identical(subjects):
    results = run_grid(small_grid(ks=(1,)), subjects)
    by_key = {r.key: r for r in results}
    n = 0
    for r in results:
        if r.strategy == "kmeans":
            other = by_key[("time_based", 1, 0, r.classifier, r.subject, r.rep)]
            assert r.f1_macro == other.f1_macro
            np.testing.assert_array_equal(r.confusion, other.confusion)
            n += 1
    assert n == 2 * 3 * 2 * 2


def test_two_regime_majority_perfect(subjects):
    # S2 switches regime at 13:00, which is the 2-part time boundary too
    grid = small_grid(ks=(2,), segment_lengths_min=(30,), classifier_kinds=("majority",), subjects=("S2",))
    results = run_grid(grid, subjects)
    assert len(results) == 2 * 2
    for r in results:
        assert r.f1_macro == 1.0
        assert r.n_fallback == 0


def test_kmeans_beats_clock_on_off_boundary_regimes(subjects):
    # S3 switches at 10:30, which a 2-part time split cannot see
    grid = small_grid(ks=(2,), segment_lengths_min=(30,), classifier_kinds=("majority",), subjects=("S3",))
    means = cell_means(run_grid(grid, subjects))
    assert means[("kmeans", 2, 30, "majority")] == 1.0
    assert means[("time_based", 2, 0, "majority")] < 1.0


def test_confusion_totals(subjects):
    for r in run_grid(small_grid(ks=(2,), segment_lengths_min=(60,)), subjects):
        assert r.confusion.sum() == r.n_test
        assert r.n_train + r.n_test == len(subjects[r.subject].windows)


# ------------------------------------------------------------- aggregation


def test_averaging_order(subjects):
    results = run_grid(small_grid(ks=(2,), segment_lengths_min=(30,), classifier_kinds=("svm",)), subjects)
    per_subject = subject_means(results)
    cells = cell_means(results)
    key = ("kmeans", 2, 30, "svm")
    expected = np.mean([np.mean([r.f1_macro for r in results if r.key[:5] == key + (s,)]) for s in ("S2", "S3")])
    assert cells[key] == pytest.approx(expected, abs=1e-15)
    assert len(per_subject) == 2 * 2


def test_matched_points(subjects, tmp_path):
    grid = small_grid(ks=(5, 7, 10), segment_lengths_min=(60, 120), classifier_kinds=("majority",),
                      repetitions=1)
    points = matched_points(run_grid(grid, subjects))
    # k=7 does not divide 600 minutes; k=10 needs 60 min and k=5 needs 120 min
    assert [(p.k, p.segment_min) for p in points] == [(5, 120), (10, 60)]
    write_summary(points, tmp_path / "summary.csv")
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0].split(",") == ["classifier", "k", "segment_min", "f1_kmeans_mean", "f1_time_mean", "delta"]
    assert len(lines) == 3


def test_matched_points_without_time_based(subjects):
    results = run_grid(small_grid(strategies=("kmeans",), ks=(2,), repetitions=1), subjects)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert matched_points(results) == []
    assert any("time_based" in str(w.message) for w in caught)


# --------------------------------------------------------------- output


def test_results_file_round_trip(subjects, tmp_path):
    results = run_grid(small_grid(ks=(2,)), subjects, out_dir=tmp_path)
    back = read_results_csv(tmp_path / "results.csv")
    assert [r.key for r in back] == [r.key for r in results]
    assert [r.f1_macro for r in back] == [r.f1_macro for r in results]
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["grid"]["subjects"] == ["S2", "S3"]


def test_resume_after_interrupt(subjects, tmp_path):
    grid = small_grid()
    run_grid(grid, subjects, out_dir=tmp_path / "full")
    reference = (tmp_path / "full" / "results.csv").read_bytes()

    out = tmp_path / "resumed"
    run_grid(grid, subjects, out_dir=out)
    cells = sorted((out / "cells").rglob("*.results.csv"))
    for path in cells[::2]:  # lose half the finished units
        path.unlink()
    (out / "results.csv").unlink()
    again = run_grid(grid, subjects, out_dir=out)
    assert (out / "results.csv").read_bytes() == reference
    assert len(again) == grid.n_rows()


def test_parallel_matches_serial(subjects, tmp_path):
    grid = small_grid(ks=(1, 2, 3))
    run_grid(grid, subjects, out_dir=tmp_path / "a", jobs=1)
    run_grid(grid, subjects, out_dir=tmp_path / "b", jobs=2)
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_missing_subject(subjects):
    with pytest.raises(KeyError):
        run_grid(small_grid(subjects=("S2", "nobody")), subjects)


def test_accepts_raw_recordings():
    rec, _ = two_regime_recording(n_days=2, seed=3)
    results = run_grid(small_grid(ks=(2,), segment_lengths_min=(30,), classifier_kinds=("majority",),
                                  subjects=(rec.subject_id,), repetitions=1), {rec.subject_id: rec})
    assert len(results) == 2
    assert {r.subject for r in results} == {"S2"}
    assert all(r.f1_macro == 1.0 for r in results if r.strategy == "kmeans")
