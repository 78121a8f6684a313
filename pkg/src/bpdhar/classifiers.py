"""Base classifiers and the per-BPD classifier bank.

All classifiers take integer label indices (canonical order) and break
ties toward the lowest index.
"""
from __future__ import annotations

import enum
import pathlib
from typing import Sequence

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import AnnotationLabel

SVM_LAMBDA = 1e-4
SVM_EPOCHS = 20
NB_VAR_FLOOR = 1e-9


class ClassifierKind(str, enum.Enum):
    majority = "majority"
    naive_bayes = "naive_bayes"
    svm = "svm"


class MissingBpdError(KeyError):
    """A BPD seen at prediction time had no training windows."""

    def __init__(self, bpds):
        self.bpds = tuple(sorted(int(d) for d in bpds))
        super().__init__(f"no classifier trained for BPD(s) {list(self.bpds)}")


def _check_training(X, y):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    if X.shape[0] == 0:
        raise ValueError("cannot train on empty data")
    return X, np.asarray(y, dtype=np.int64)


class MajorityClassifier(ClassifierMixin, BaseEstimator):
    """Always predicts the most frequent training label."""

    def fit(self, X, y):
        X, y = _check_training(X, y)
        self.classes_, counts = np.unique(y, return_counts=True)
        self.mode_ = int(self.classes_[np.argmax(counts)])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "mode_")
        X = check_array(X)
        return np.full(X.shape[0], self.mode_, dtype=np.int64)


class GaussianNaiveBayes(ClassifierMixin, BaseEstimator):
    """Gaussian naive Bayes with empirical priors.

    Per-class variances are floored at ``var_floor`` times the largest
    per-feature variance of the whole training set (or at ``var_floor``
    itself when every feature is constant).
    """

    def __init__(self, var_floor=NB_VAR_FLOOR):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = _check_training(X, y)
        self.classes_, counts = np.unique(y, return_counts=True)
        self.class_prior_ = counts / counts.sum()
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in self.classes_])
        var = np.array([X[y == c].var(axis=0) for c in self.classes_])
        floor = self.var_floor * float(X.var(axis=0).max())
        self.floor_ = floor if floor > 0 else self.var_floor
        self.var_ = np.maximum(var, self.floor_)
        self.n_features_in_ = X.shape[1]
        return self

    def joint_log_likelihood(self, X):
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        out = np.empty((X.shape[0], self.classes_.size))
        for i in range(self.classes_.size):
            ll = -0.5 * np.log(2.0 * np.pi * self.var_[i]).sum()
            ll = ll - 0.5 * (((X - self.theta_[i]) ** 2) / self.var_[i]).sum(axis=1)
            out[:, i] = np.log(self.class_prior_[i]) + ll
        return out

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        if self.classes_.size == 1:
            return np.full(check_array(X).shape[0], self.classes_[0], dtype=np.int64)
        return self.classes_[np.argmax(self.joint_log_likelihood(X), axis=1)]


@numba.njit(cache=True)
def _pegasos(X, Y, order, lam, W):
    """One-vs-rest Pegasos over all classes at once.

    ``X`` carries a trailing constant column (regularized bias), ``Y`` is
    the +/-1 target matrix, ``order`` holds one permutation per epoch.
    ``W`` is updated in place; returns the primal objective per epoch end.
    """
    n, p = X.shape
    n_classes = Y.shape[1]
    epochs = order.shape[0]
    objectives = np.zeros((epochs, n_classes))
    scale = 1.0
    t = 0
    margins = np.empty(n_classes)
    for e in range(epochs):
        for j in range(n):
            i = order[e, j]
            t += 1
            eta = 1.0 / (lam * t)
            for c in range(n_classes):
                acc = 0.0
                for f in range(p):
                    acc += W[c, f] * X[i, f]
                margins[c] = scale * acc * Y[i, c]
            if t == 1:
                W[:, :] = 0.0
                scale = 1.0
            else:
                scale *= 1.0 - 1.0 / t
            for c in range(n_classes):
                if margins[c] < 1.0:
                    g = eta * Y[i, c] / scale
                    for f in range(p):
                        W[c, f] += g * X[i, f]
            if scale < 1e-6:
                for c in range(n_classes):
                    for f in range(p):
                        W[c, f] *= scale
                scale = 1.0
        for c in range(n_classes):
            sq = 0.0
            for f in range(p):
                sq += (scale * W[c, f]) ** 2
            hinge = 0.0
            for i in range(n):
                acc = 0.0
                for f in range(p):
                    acc += W[c, f] * X[i, f]
                m = 1.0 - scale * acc * Y[i, c]
                if m > 0.0:
                    hinge += m
            objectives[e, c] = 0.5 * lam * sq + hinge / n
    for c in range(n_classes):
        for f in range(p):
            W[c, f] *= scale
    return objectives


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Linear one-vs-rest SVM trained by seeded Pegasos on standardized features.

    Each epoch visits the training set in a fresh permutation drawn from
    ``default_rng(random_state)``. The bias is a regularized weight on a
    constant input. ``objective_history_[e, c]`` is the primal objective of
    class ``c`` after epoch ``e``.
    """

    def __init__(self, lam=SVM_LAMBDA, epochs=SVM_EPOCHS, random_state=0):
        self.lam = lam
        self.epochs = epochs
        self.random_state = random_state

    def fit(self, X, y):
        X, y = _check_training(X, y)
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        if self.classes_.size == 1:
            self.coef_ = np.zeros((1, X.shape[1]))
            self.intercept_ = np.zeros(1)
            self.objective_history_ = np.zeros((0, 1))
            return self
        Z = np.hstack([(X - self.mean_) / self.scale_, np.ones((X.shape[0], 1))])
        Y = np.where(y[:, None] == self.classes_[None, :], 1.0, -1.0)
        rng = np.random.default_rng(self.random_state)
        order = np.stack([rng.permutation(X.shape[0]) for _ in range(int(self.epochs))])
        W = np.zeros((self.classes_.size, Z.shape[1]))
        self.objective_history_ = _pegasos(Z, Y, order, float(self.lam), W)
        self.coef_ = W[:, :-1]
        self.intercept_ = W[:, -1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return ((X - self.mean_) / self.scale_) @ self.coef_.T + self.intercept_

    def predict(self, X):
        if self.classes_.size == 1:
            return np.full(check_array(X).shape[0], self.classes_[0], dtype=np.int64)
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def make_classifier(kind, seed=0):
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.majority:
        return MajorityClassifier()
    if kind is ClassifierKind.naive_bayes:
        return GaussianNaiveBayes()
    return LinearSVM(random_state=seed)


def train(kind, data: Sequence, seed: int = 0):
    """Fit a classifier of ``kind`` on ``(values, label)`` pairs."""
    if len(data) == 0:
        raise ValueError("cannot train on empty data")
    X = np.array([np.asarray(v, dtype=np.float64) for v, _ in data])
    y = np.array([int(label) for _, label in data], dtype=np.int64)
    return make_classifier(kind, seed).fit(X, y)


def predict(classifier, x) -> AnnotationLabel:
    return AnnotationLabel(int(classifier.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]))


# ------------------------------------------------------------------------ bank


class BpdClassifierBank(BaseEstimator):
    """One classifier per BPD: ``predict(X, bpd)[i] = c_{bpd[i]}(X[i])``.

    Every partition is trained with the same ``random_state``; with a
    single BPD the bank is exactly the global classifier.
    """

    def __init__(self, kind="majority", random_state=0):
        self.kind = kind
        self.random_state = random_state

    def fit(self, X, y, bpd):
        X, y = _check_training(X, y)
        bpd = np.asarray(bpd, dtype=np.int64)
        if bpd.shape != y.shape:
            raise ValueError("bpd must have one entry per sample")
        self.classifiers_ = {}
        for d in np.unique(bpd):
            mask = bpd == d
            self.classifiers_[int(d)] = make_classifier(self.kind, self.random_state).fit(X[mask], y[mask])
        self.bpds_ = np.array(sorted(self.classifiers_), dtype=np.int64)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, bpd):
        check_is_fitted(self, "classifiers_")
        X = check_array(X, dtype=np.float64)
        bpd = np.asarray(bpd, dtype=np.int64).reshape(-1)
        missing = set(np.unique(bpd).tolist()) - set(self.classifiers_)
        if missing:
            raise MissingBpdError(missing)
        out = np.empty(X.shape[0], dtype=np.int64)
        for d in np.unique(bpd):
            mask = bpd == d
            out[mask] = self.classifiers_[int(d)].predict(X[mask])
        return out


def train_bank(kind, labeled: Sequence, seed: int = 0) -> BpdClassifierBank:
    """Fit a bank from ``(FeatureVector, d)`` pairs."""
    if len(labeled) == 0:
        raise ValueError("cannot train on empty data")
    X = np.array([fv.values for fv, _ in labeled], dtype=np.float64)
    y = np.array([int(fv.label) for fv, _ in labeled], dtype=np.int64)
    bpd = np.array([int(d) for _, d in labeled], dtype=np.int64)
    return BpdClassifierBank(kind, seed).fit(X, y, bpd)


def predict_bank(bank: BpdClassifierBank, x, d: int) -> AnnotationLabel:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return AnnotationLabel(int(bank.predict(x, [d])[0]))


# ------------------------------------------------------------- serialization

BANK_FORMAT = "bpdhar-bank"
BANK_VERSION = 1


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _ints(values) -> str:
    return " ".join(str(int(v)) for v in np.ravel(values))


def dumps_bank(bank: BpdClassifierBank) -> str:
    """Text form of a fitted bank; the line grammar is described in the README."""
    check_is_fitted(bank, "classifiers_")
    kind = ClassifierKind(bank.kind)
    lines = [
        f"format {BANK_FORMAT} {BANK_VERSION}",
        f"kind {kind.value}",
        f"random_state {int(bank.random_state)}",
        f"k {len(bank.classifiers_)}",
        f"n_features {bank.n_features_in_}",
    ]
    for d in sorted(bank.classifiers_):
        clf = bank.classifiers_[d]
        lines.append(f"bpd {d}")
        lines.append(f"classes {_ints(clf.classes_)}")
        if kind is ClassifierKind.majority:
            lines.append(f"mode {clf.mode_}")
        elif kind is ClassifierKind.naive_bayes:
            lines.append(f"floor {repr(float(clf.floor_))}")
            lines.append(f"prior {_floats(clf.class_prior_)}")
            for c, mean, var in zip(clf.classes_, clf.theta_, clf.var_):
                lines.append(f"mean {int(c)} {_floats(mean)}")
                lines.append(f"var {int(c)} {_floats(var)}")
        else:
            lines.append(f"center {_floats(clf.mean_)}")
            lines.append(f"scale {_floats(clf.scale_)}")
            if clf.classes_.size > 1:
                for c, w, b in zip(clf.classes_, clf.coef_, clf.intercept_):
                    lines.append(f"weights {int(c)} {_floats(w)} {repr(float(b))}")
        lines.append("end")
    return "\n".join(lines) + "\n"


def loads_bank(text: str) -> BpdClassifierBank:
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    it = iter(rows)

    def expect(key):
        row = next(it, None)
        if row is None:
            raise ValueError(f"unexpected end of bank text, expected {key!r}")
        if row[0] != key:
            raise ValueError(f"expected {key!r}, got {row[0]!r}")
        return row[1:]

    fmt = expect("format")
    if fmt != [BANK_FORMAT, str(BANK_VERSION)]:
        raise ValueError(f"unsupported bank format {' '.join(fmt)}")
    kind = ClassifierKind(expect("kind")[0])
    random_state = int(expect("random_state")[0])
    k = int(expect("k")[0])
    n_features = int(expect("n_features")[0])
    bank = BpdClassifierBank(kind.value, random_state)
    bank.classifiers_ = {}
    for _ in range(k):
        d = int(expect("bpd")[0])
        classes = np.array([int(v) for v in expect("classes")], dtype=np.int64)
        clf = make_classifier(kind, random_state)
        clf.classes_ = classes
        clf.n_features_in_ = n_features
        if kind is ClassifierKind.majority:
            clf.mode_ = int(expect("mode")[0])
        elif kind is ClassifierKind.naive_bayes:
            clf.floor_ = float(expect("floor")[0])
            clf.class_prior_ = np.array([float(v) for v in expect("prior")])
            means, variances = [], []
            for _c in classes:
                means.append([float(v) for v in expect("mean")[1:]])
                variances.append([float(v) for v in expect("var")[1:]])
            clf.theta_ = np.array(means)
            clf.var_ = np.array(variances)
        else:
            clf.mean_ = np.array([float(v) for v in expect("center")])
            clf.scale_ = np.array([float(v) for v in expect("scale")])
            if classes.size > 1:
                rows_w = [[float(v) for v in expect("weights")[1:]] for _c in classes]
                W = np.array(rows_w)
                clf.coef_, clf.intercept_ = W[:, :-1], W[:, -1]
            else:
                clf.coef_, clf.intercept_ = np.zeros((1, n_features)), np.zeros(1)
        expect("end")
        bank.classifiers_[d] = clf
    bank.bpds_ = np.array(sorted(bank.classifiers_), dtype=np.int64)
    bank.n_features_in_ = n_features
    return bank


def save_bank(bank: BpdClassifierBank, path) -> None:
    pathlib.Path(path).write_text(dumps_bank(bank), encoding="utf-8")


def load_bank(path) -> BpdClassifierBank:
    return loads_bank(pathlib.Path(path).read_text(encoding="utf-8"))
