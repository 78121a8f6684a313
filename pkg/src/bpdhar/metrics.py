"""Confusion matrices and F1 over the seven canonical labels."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .dataset import N_LABELS


def confusion_matrix_arrays(y_true, y_pred) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    cm = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def confusion_matrix(pairs: Iterable) -> np.ndarray:
    """7x7 counts; entry ``(i, j)`` counts pairs with true label i and prediction j."""
    pairs = list(pairs)
    if not pairs:
        return np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    true, pred = zip(*((int(t), int(p)) for t, p in pairs))
    return confusion_matrix_arrays(true, pred)


def f1_scores(matrix) -> tuple:
    """Return ``(macro_f1, per_class_f1)``.

    Per-class F1 is 0 where precision + recall is 0. The macro mean runs over
    classes that occur in the true labels; it is 0 for an empty matrix.
    """
    cm = np.asarray(matrix, dtype=np.float64)
    tp = np.diag(cm)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        per_class = np.where(denom > 0, 2.0 * precision * recall / denom, 0.0)
    present = actual > 0
    macro = float(per_class[present].mean()) if present.any() else 0.0
    return macro, per_class


def f1_macro(matrix) -> float:
    return f1_scores(matrix)[0]
