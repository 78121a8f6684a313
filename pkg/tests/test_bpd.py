import csv
import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from bpdhar.bpd import (
    BpdModel,
    TimeOfDayPartitioner,
    build_histograms,
    histogram_matrix,
    kmeans_cluster,
    label_windows,
    time_based_assign,
    time_part,
    write_bpd_model,
)
from bpdhar.dataset import AnnotationLabel, AnnotationRecord, segment_day, segment_days
from bpdhar.features import WindowSpec, featurize_recording

from conftest import DAY0

L = AnnotationLabel


def test_histogram_relative_frequencies():
    labels = [L.apathy, L.apathy, L.apathy, L.pacing, L.pacing, L.normal]
    ann = [AnnotationRecord(DAY0, 480 + 5 * i, lab) for i, lab in enumerate(labels)]
    segs = segment_days([DAY0], ann, 30)
    hists = build_histograms(segs, ann)
    assert len(hists) == 1
    np.testing.assert_allclose(hists[0].probs, [1 / 2, 0, 0, 1 / 3, 0, 0, 1 / 6])
    assert hists[0].count == 6 and hists[0].segment_id == "2021-06-01/0480"


def test_single_annotation_segment():
    ann = [AnnotationRecord(DAY0, 600, L.pacing)]
    hists = build_histograms(segment_days([DAY0], ann, 5), ann)
    assert len(hists) == 1
    np.testing.assert_array_equal(hists[0].probs, np.eye(7)[3])


def test_empty_segments_omitted():
    ann = [AnnotationRecord(DAY0, 480, L.normal)]
    segs = segment_days([DAY0], ann, 60)
    assert len(segs) == 10
    assert [h.segment_id for h in build_histograms(segs, ann)] == ["2021-06-01/0480"]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 119), st.integers(0, 6)), max_size=200, unique_by=lambda t: t[0]),
       st.sampled_from([5, 10, 15, 30, 60, 120]))
def test_histogram_normalization(slots, length):
    ann = [AnnotationRecord(DAY0, 480 + 5 * s, lab) for s, lab in slots]
    hists = build_histograms(segment_days([DAY0], ann, length), ann)
    assert sum(h.count for h in hists) == len(ann)
    for h in hists:
        assert abs(h.probs.sum() - 1.0) <= 1e-9
        assert (h.probs >= 0).all() and (h.probs <= 1).all()
        np.testing.assert_allclose(h.probs * h.count, np.round(h.probs * h.count), atol=1e-9)


# -------------------------------------------------------------- time based


def test_time_based_k1():
    segs = segment_days([DAY0], [], 30)
    assert set(time_based_assign(segs, 1).assignment.values()) == {0}


def test_time_based_k20():
    segs = segment_days([DAY0], [], 30)
    model = time_based_assign(segs, 20)
    assert model.bpd_of("2021-06-01/0480") == 0
    assert model.bpd_of("2021-06-01/1050") == 19
    assert model.centroids is None


def test_time_based_k7_remainder():
    # parts of 85 minutes, the last one 90 minutes long
    parts = time_part(np.arange(480, 1080, 5), 7)
    assert np.bincount(parts).tolist() == [17] * 6 + [18]
    assert time_part(480 + 80, 7) == 0 and time_part(480 + 85, 7) == 1
    assert time_part(1075, 7) == 6


def test_time_based_same_across_days():
    days = [DAY0 + dt.timedelta(days=i) for i in range(3)]
    model = time_based_assign(segment_days(days, [], 15), 5)
    by_minute = {}
    for sid, d in model.assignment.items():
        by_minute.setdefault(sid.split("/")[1], set()).add(d)
    assert all(len(v) == 1 for v in by_minute.values())


def test_partitioner_estimator():
    est = TimeOfDayPartitioner(n_parts=4).fit()
    np.testing.assert_array_equal(est.boundaries_, [480, 630, 780, 930])
    np.testing.assert_array_equal(est.predict([480, 629, 630, 1075]), [0, 0, 1, 3])
    with pytest.raises(ValueError):
        TimeOfDayPartitioner(n_parts=121).fit()


# ------------------------------------------------------------------ k-means


def test_kmeans_k1_centroid_mean(two_regime):
    rec, _ = two_regime
    hists = build_histograms(segment_day(rec, 30), rec.annotations)
    model = kmeans_cluster(hists, 1, seed=0)
    np.testing.assert_allclose(model.centroids[0], histogram_matrix(hists).mean(axis=0))
    assert set(model.assignment.values()) == {0}


def test_kmeans_k_too_large():
    ann = [AnnotationRecord(DAY0, 480, L.normal)]
    hists = build_histograms(segment_days([DAY0], ann, 30), ann)
    with pytest.raises(ValueError):
        kmeans_cluster(hists, 2, seed=0)


def test_kmeans_recovers_regimes(two_regime):
    rec, truth = two_regime
    segs = segment_day(rec, 30)
    model = kmeans_cluster(build_histograms(segs, rec.annotations), 2, seed=3)
    pred = [model.bpd_of(s.segment_id) for s in segs]
    true = [truth[(s.day, s.start_minute)] for s in segs]
    assert adjusted_rand_score(true, pred) == 1.0


def test_label_windows_two_regimes(two_regime):
    rec, truth = two_regime
    segs = segment_day(rec, 30)
    model = kmeans_cluster(build_histograms(segs, rec.annotations), 2, seed=0)
    pairs, dropped = label_windows(model, featurize_recording(rec, WindowSpec(), segs))
    assert dropped == 0
    by_label = {}
    for fv, d in pairs:
        by_label.setdefault(fv.label, set()).add(d)
    assert by_label[L.apathy] != by_label[L.pacing]
    assert all(len(v) == 1 for v in by_label.values())


def test_label_windows_drops_unknown_segment(two_regime):
    rec, _ = two_regime
    segs = segment_day(rec, 30)
    vectors = featurize_recording(rec, WindowSpec(), segs)
    model = BpdModel("time_based", 1, {s.segment_id: 0 for s in segs[1:]})
    pairs, dropped = label_windows(model, vectors)
    assert dropped == sum(v.segment_id == segs[0].segment_id for v in vectors) > 0
    assert {d for _, d in pairs} == {0}


def test_write_bpd_model(tmp_path, two_regime):
    rec, _ = two_regime
    segs = segment_day(rec, 60)
    model = kmeans_cluster(build_histograms(segs, rec.annotations), 2, seed=0)
    paths = write_bpd_model(model, segs, tmp_path / "m")
    assert [p.name for p in paths] == ["m.bpd.csv", "m.centroids.csv"]
    rows = list(csv.reader(open(paths[0])))
    assert rows[0] == ["segment_id", "date", "start_minute", "bpd"] and len(rows) == 1 + len(segs)
    cent = list(csv.reader(open(paths[1])))
    assert cent[0] == ["bpd"] + [f"p{i}" for i in range(7)]
    np.testing.assert_array_equal(np.array(cent[1:], dtype=float)[:, 1:], model.centroids)
    assert write_bpd_model(time_based_assign(segs, 3), segs, tmp_path / "t")[0].name == "t.bpd.csv"
