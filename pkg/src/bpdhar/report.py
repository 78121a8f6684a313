"""Plain SVG charts and text tables for experiment results.

Everything is written by hand with fixed number formatting, so identical
inputs give identical bytes.
"""
from __future__ import annotations

import pathlib
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dataset import LABEL_NAMES, N_LABELS
from .experiments import cell_means, matched_points, subject_means

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
TIME_COLOR = "#000000"

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=60, right=150, top=40, bottom=50)


def _f(v: float) -> str:
    return f"{v:.2f}"


class Svg:
    def __init__(self, width=WIDTH, height=HEIGHT):
        self.width = width
        self.height = height
        self.items = []

    def add(self, tag: str, text: str | None = None, **attrs) -> None:
        parts = [tag]
        for key, value in attrs.items():
            if isinstance(value, float):
                value = _f(value)
            parts.append(f'{key.rstrip("_").replace("_", "-")}="{escape(str(value))}"')
        body = " ".join(parts)
        if text is None:
            self.items.append(f"<{body}/>")
        else:
            self.items.append(f"<{body}>{escape(text)}</{tag}>")

    def text(self, x, y, s, size=12, anchor="start", **attrs) -> None:
        self.add("text", s, x=float(x), y=float(y), font_size=size, text_anchor=anchor,
                 font_family="sans-serif", **attrs)

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        rect = f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>'
        return "\n".join([head, rect, *self.items, "</svg>"]) + "\n"


class _Axes:
    """Maps data coordinates into the plotting rectangle."""

    def __init__(self, svg: Svg, xlim, ylim):
        self.svg = svg
        self.x0, self.x1 = MARGIN["left"], svg.width - MARGIN["right"]
        self.y0, self.y1 = svg.height - MARGIN["bottom"], MARGIN["top"]
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo or 1.0) * (self.x1 - self.x0)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 - (y - lo) / (hi - lo or 1.0) * (self.y0 - self.y1)

    def frame(self, xticks, yticks, xlabel, ylabel):
        s = self.svg
        s.add("line", x1=float(self.x0), y1=float(self.y0), x2=float(self.x1), y2=float(self.y0), stroke="#000000")
        s.add("line", x1=float(self.x0), y1=float(self.y0), x2=float(self.x0), y2=float(self.y1), stroke="#000000")
        for t in xticks:
            x = self.px(t)
            s.add("line", x1=x, y1=float(self.y0), x2=x, y2=self.y0 + 4.0, stroke="#000000")
            s.text(x, self.y0 + 16, str(t), size=10, anchor="middle")
        for t in yticks:
            y = self.py(t)
            s.add("line", x1=self.x0 - 4.0, y1=y, x2=float(self.x0), y2=y, stroke="#000000")
            s.add("line", x1=float(self.x0), y1=y, x2=float(self.x1), y2=y, stroke="#e0e0e0")
            s.text(self.x0 - 6, y + 3, f"{t:.1f}", size=10, anchor="end")
        s.text((self.x0 + self.x1) / 2, self.svg.height - 12, xlabel, anchor="middle")
        s.text(14, (self.y0 + self.y1) / 2, ylabel, anchor="middle",
               transform=f"rotate(-90 14 {_f((self.y0 + self.y1) / 2)})")


def _ticks(lo, hi, n=6):
    if hi <= lo:
        return [lo]
    step = max(1, int(np.ceil((hi - lo) / (n - 1))))
    return list(range(lo, hi + 1, step))


# ---------------------------------------------------------------------- charts


def f1_series(results, classifier: str) -> dict:
    """``{label: [(k, mean_f1), ...]}`` for one classifier; one series per segment length."""
    series = {}
    for (strategy, k, seg, kind), value in cell_means(results).items():
        if kind != classifier:
            continue
        label = "time-based" if strategy == "time_based" else f"{seg} min"
        series.setdefault((strategy != "time_based", seg, label), []).append((k, value))
    # k-means series ordered by segment length, time-based last
    ordered = sorted(series.items(), key=lambda item: (not item[0][0], item[0][1]))
    return {key[2]: sorted(points) for key, points in ordered}


def f1_chart(results, classifier: str) -> str:
    series = f1_series(results, classifier)
    ks = sorted({k for pts in series.values() for k, _ in pts})
    svg = Svg()
    ax = _Axes(svg, (ks[0] - 0.5, ks[-1] + 0.5) if ks else (0, 1), (0.0, 1.0))
    ax.frame(_ticks(ks[0], ks[-1]) if ks else [], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
             "number of BPDs k", "mean macro F1")
    svg.text(WIDTH / 2 - MARGIN["right"] / 2, 22, f"F1 vs k ({classifier})", size=14, anchor="middle")
    for i, (label, pts) in enumerate(series.items()):
        color = TIME_COLOR if label == "time-based" else PALETTE[i % len(PALETTE)]
        dash = {"stroke_dasharray": "6 3"} if label == "time-based" else {}
        coords = " ".join(f"{_f(ax.px(k))},{_f(ax.py(v))}" for k, v in pts)
        svg.add("polyline", points=coords, fill="none", stroke=color, stroke_width=2, **dash)
        for k, v in pts:
            svg.add("circle", cx=ax.px(k), cy=ax.py(v), r=2.5, fill=color)
        ly = MARGIN["top"] + 16 * i
        lx = WIDTH - MARGIN["right"] + 12
        svg.add("line", x1=float(lx), y1=float(ly), x2=float(lx + 20), y2=float(ly), stroke=color,
                stroke_width=2, **dash)
        svg.text(lx + 26, ly + 4, label, size=11)
    points = [p for p in _matched(results) if p.classifier == classifier]
    for p in points:
        for v in (p.f1_kmeans_mean, p.f1_time_mean):
            svg.add("circle", cx=ax.px(p.k), cy=ax.py(v), r=6.0, fill="none", stroke="#000000", stroke_width=1.5,
                    class_="matched")
    if points:
        ly = MARGIN["top"] + 16 * len(series) + 8
        svg.add("circle", cx=float(WIDTH - MARGIN["right"] + 22), cy=float(ly), r=6.0, fill="none",
                stroke="#000000", stroke_width=1.5)
        svg.text(WIDTH - MARGIN["right"] + 38, ly + 4, "matched point", size=11)
    return svg.render()


def _matched(results):
    if not any(r.strategy == "time_based" for r in results):
        return []
    return matched_points(results)


def confusion_heatmap(matrix, title: str) -> str:
    """Row-normalised 7x7 heat map; empty rows stay white."""
    cm = np.asarray(matrix, dtype=np.float64)
    rows = cm.sum(axis=1, keepdims=True)
    norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    cell = 44
    left, top = 140, 60
    svg = Svg(left + cell * N_LABELS + 30, top + cell * N_LABELS + 110)
    svg.text(svg.width / 2, 24, title, size=14, anchor="middle")
    for i in range(N_LABELS):
        svg.text(left - 6, top + cell * i + cell / 2 + 4, LABEL_NAMES[i], size=10, anchor="end")
        x = left + cell * i + cell / 2
        y = top + cell * N_LABELS + 8
        svg.text(x, y, LABEL_NAMES[i], size=10, anchor="end", transform=f"rotate(-45 {_f(x)} {_f(y)})")
        for j in range(N_LABELS):
            v = norm[i, j]
            shade = int(round(255 * (1.0 - v)))
            svg.add("rect", x=float(left + cell * j), y=float(top + cell * i), width=cell, height=cell,
                    fill=f"#{shade:02x}{shade:02x}ff", stroke="#ffffff")
            if rows[i, 0] > 0:
                svg.text(left + cell * j + cell / 2, top + cell * i + cell / 2 + 4, f"{v:.2f}", size=10,
                         anchor="middle", fill="#ffffff" if v > 0.5 else "#000000")
    svg.text(left + cell * N_LABELS / 2, svg.height - 8, "predicted", anchor="middle")
    svg.text(16, top + cell * N_LABELS / 2, "true", anchor="middle",
             transform=f"rotate(-90 16 {_f(top + cell * N_LABELS / 2)})")
    return svg.render()


def annotation_distribution_chart(counts: Mapping[str, Sequence[int]]) -> str:
    """Stacked bars: share of each behaviour per subject."""
    subjects = sorted(counts)
    svg = Svg()
    ax = _Axes(svg, (0, max(len(subjects), 1)), (0.0, 1.0))
    ax.frame([], [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], "subject", "share of annotations")
    svg.text(WIDTH / 2 - MARGIN["right"] / 2, 22, "Annotation distribution", size=14, anchor="middle")
    bar = (ax.x1 - ax.x0) / max(len(subjects), 1)
    for n, subject in enumerate(subjects):
        c = np.asarray(counts[subject], dtype=np.float64)
        share = c / c.sum() if c.sum() > 0 else c
        base = 0.0
        x = ax.x0 + bar * n + bar * 0.15
        for label in range(N_LABELS):
            if share[label] > 0:
                y_top = ax.py(base + share[label])
                svg.add("rect", x=x, y=y_top, width=bar * 0.7, height=ax.py(base) - y_top,
                        fill=PALETTE[label])
            base += share[label]
        svg.text(x + bar * 0.35, ax.y0 + 16, subject, size=10, anchor="middle")
    for label in range(N_LABELS):
        ly = MARGIN["top"] + 16 * label
        lx = WIDTH - MARGIN["right"] + 12
        svg.add("rect", x=float(lx), y=float(ly - 8), width=12, height=12, fill=PALETTE[label])
        svg.text(lx + 18, ly + 2, LABEL_NAMES[label], size=11)
    return svg.render()


# ---------------------------------------------------------------------- tables


def cell_table(results) -> str:
    rows = [("strategy", "k", "segment_min", "classifier", "mean_f1")]
    for (strategy, k, seg, kind), value in cell_means(results).items():
        rows.append((strategy, str(k), str(seg), kind, f"{value:.4f}"))
    return _format_table(rows)


def subject_table(results) -> str:
    """Per-subject means over repetitions, the level ``cell_table`` averages over."""
    rows = [("strategy", "k", "segment_min", "classifier", "subject", "mean_f1")]
    for (strategy, k, seg, kind, subject), value in subject_means(results).items():
        rows.append((strategy, str(k), str(seg), kind, subject, f"{value:.4f}"))
    return _format_table(rows)


def matched_table(results) -> str:
    rows = [("classifier", "k", "segment_min", "kmeans", "time_based", "delta")]
    for p in _matched(results):
        rows.append((p.classifier, str(p.k), str(p.segment_min), f"{p.f1_kmeans_mean:.4f}",
                     f"{p.f1_time_mean:.4f}", f"{p.delta:+.4f}"))
    return _format_table(rows)


def _format_table(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def best_cell(results) -> tuple:
    """``(strategy, k, segment_min, classifier)`` with the highest mean F1; ties go to the first key."""
    means = cell_means(results)
    return max(means, key=means.get)


def parse_cell(text: str) -> tuple:
    """``"kmeans,20,30,svm"`` -> ``("kmeans", 20, 30, "svm")``."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError(f"cell {text!r} must be strategy,k,segment_min,classifier")
    strategy, k, seg, kind = parts
    return strategy, int(k), int(seg), kind


def write_report(results, out_dir, *, confusion=None, cell=None, annotation_counts=None) -> list:
    """Write charts and tables into ``out_dir``; return the written paths.

    ``confusion`` is the summed confusion matrix of ``cell``.
    """
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    for kind in sorted({r.classifier for r in results}):
        put(f"f1_vs_k_{kind}.svg", f1_chart(results, kind))
    if confusion is not None and cell is not None:
        strategy, k, seg, kind = cell
        seg_txt = "" if strategy == "time_based" else f", {seg} min"
        put("confusion.svg", confusion_heatmap(confusion, f"{strategy} k={k}{seg_txt}, {kind}"))
    if annotation_counts:
        put("annotations.svg", annotation_distribution_chart(annotation_counts))
    put("cells.txt", cell_table(results))
    put("subjects.txt", subject_table(results))
    put("matched.txt", matched_table(results))
    return written

