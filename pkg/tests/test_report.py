import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bpdhar.experiments import DEFAULT_SEGMENT_LENGTHS, ExperimentResult
from bpdhar.report import (
    best_cell,
    cell_table,
    confusion_heatmap,
    f1_chart,
    f1_series,
    parse_cell,
    write_report,
)

SVG = "{http://www.w3.org/2000/svg}"


def fake_results(strategies=("kmeans", "time_based"), ks=range(1, 21), segs=DEFAULT_SEGMENT_LENGTHS,
                 kinds=("majority",), subjects=("A", "B"), reps=2):
    out = []
    for strategy in strategies:
        for k in ks:
            for seg in (segs if strategy == "kmeans" else (0,)):
                for kind in kinds:
                    for subject in subjects:
                        for rep in range(reps):
                            f1 = 0.1 + 0.02 * k + (0.001 * seg if strategy == "kmeans" else 0.0)
                            cm = np.zeros((7, 7), dtype=np.int64)
                            out.append(ExperimentResult(strategy, k, seg, kind, subject, rep, f1, np.zeros(7),
                                                        cm, 7, 3, 0))
    return out


def polylines(svg_text):
    root = ET.fromstring(svg_text)
    return root.findall(f".//{SVG}polyline")


def test_minimal_grid_single_flat_series():
    results = fake_results(strategies=("kmeans",), ks=(1,), segs=(30,))
    assert f1_series(results, "majority") == {"30 min": [(1, pytest.approx(0.15))]}
    lines = polylines(f1_chart(results, "majority"))
    assert len(lines) == 1
    assert len(lines[0].get("points").split()) == 1


def test_full_grid_seven_series():
    results = fake_results()
    series = f1_series(results, "majority")
    assert list(series) == [f"{s} min" for s in DEFAULT_SEGMENT_LENGTHS] + ["time-based"]
    svg = f1_chart(results, "majority")
    assert len(polylines(svg)) == 7
    root = ET.fromstring(svg)
    matched = [c for c in root.iter(f"{SVG}circle") if c.get("class") == "matched"]
    # (5,120), (10,60), (20,30) each circled on both curves
    assert len(matched) == 6


def test_heatmap_row_normalised():
    cm = np.zeros((7, 7), dtype=np.int64)
    cm[0, 0], cm[0, 1], cm[2, 2] = 3, 1, 5
    svg = confusion_heatmap(cm, "demo")
    texts = [t.text for t in ET.fromstring(svg).iter(f"{SVG}text")]
    assert "0.75" in texts and "0.25" in texts and "1.00" in texts


def test_tables_and_best_cell():
    results = fake_results(ks=(1, 2), segs=(30, 60))
    assert best_cell(results) == ("kmeans", 2, 60, "majority")
    table = cell_table(results).splitlines()
    assert table[0].split() == ["strategy", "k", "segment_min", "classifier", "mean_f1"]
    assert len(table) == 1 + 2 * 2 + 2


@pytest.mark.parametrize("text", ["kmeans,2,30", "kmeans,x,30,svm"])
def test_parse_cell_rejects(text):
    with pytest.raises(ValueError):
        parse_cell(text)


def test_write_report_idempotent(tmp_path):
    results = fake_results(ks=(1, 5, 10, 20), kinds=("majority", "svm"))
    cm = np.eye(7, dtype=np.int64)
    kw = dict(confusion=cm, cell=("kmeans", 5, 120, "svm"), annotation_counts={"A": [1] * 7, "B": [0, 2, 0, 0, 0, 0, 1]})
    a = write_report(results, tmp_path / "a", **kw)
    b = write_report(results, tmp_path / "b", **kw)
    assert [p.name for p in a] == [
        "f1_vs_k_majority.svg", "f1_vs_k_svm.svg", "confusion.svg", "annotations.svg",
        "cells.txt", "subjects.txt", "matched.txt",
    ]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        if pa.suffix == ".svg":
            ET.fromstring(pa.read_text())
    matched = (tmp_path / "a" / "matched.txt").read_text().splitlines()
    assert len(matched) == 1 + 3 * 2
