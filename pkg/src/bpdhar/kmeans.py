"""Lloyd's k-means with k-means++ seeding and seeded restarts."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted


def squared_distances(X, centers):
    d2 = (X * X).sum(axis=1)[:, None] - 2.0 * X @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def within_cluster_sse(X, labels, centers) -> float:
    diff = X - centers[labels]
    return float((diff * diff).sum())


def kmeans_plusplus(X, n_clusters, rng):
    """D^2-weighted seeding; falls back to uniform picks once every point is a center."""
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, n_clusters):
        total = d2.sum()
        if total <= 0.0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[idx].copy()


def _repair_empty(X, labels, centers, n_clusters):
    counts = np.bincount(labels, minlength=n_clusters)
    empty = np.flatnonzero(counts == 0)
    if not empty.size:
        return labels
    labels = labels.copy()
    dist = ((X - centers[labels]) ** 2).sum(axis=1)
    for e in empty:
        movable = counts[labels] > 1
        cand = np.flatnonzero(movable)
        p = cand[np.argmax(dist[cand])]
        counts[labels[p]] -= 1
        labels[p] = e
        counts[e] = 1
        dist[p] = 0.0
    return labels


def _update_centers(X, labels, n_clusters):
    centers = np.zeros((n_clusters, X.shape[1]))
    np.add.at(centers, labels, X)
    counts = np.bincount(labels, minlength=n_clusters)
    return centers / counts[:, None]


def lloyd(X, centers, max_iter=300):
    """Run Lloyd iterations from ``centers``.

    Stops when the assignment no longer changes or after ``max_iter``
    assignment steps. Returns ``(labels, centers, sse_history, n_iter)``
    where ``sse_history[i]`` is the SSE after the i-th centroid update.
    """
    n_clusters = centers.shape[0]
    labels = None
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new = np.argmin(squared_distances(X, centers), axis=1)
        new = _repair_empty(X, new, centers, n_clusters)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = _update_centers(X, labels, n_clusters)
        history.append(within_cluster_sse(X, labels, centers))
    return labels, centers, history, n_iter


class HistogramKMeans(ClusterMixin, BaseEstimator):
    """k-means on raw probability vectors under Euclidean distance.

    Each of ``n_init`` restarts gets its own child of
    ``SeedSequence(random_state)``; the restart with the lowest
    within-cluster SSE wins (earliest on ties).

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    labels_ : ndarray of shape (n_samples,)
    inertia_ : float
        Within-cluster sum of squared distances of the selected restart.
    sse_history_ : list of float
        SSE after each Lloyd iteration of the selected restart.
    restart_sse_histories_ : list of list of float
    """

    def __init__(self, n_clusters=8, *, n_init=10, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        k = int(self.n_clusters)
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"n_clusters={k} must lie in [1, n_samples={X.shape[0]}]")
        if self.n_init < 1 or self.max_iter < 1:
            raise ValueError("n_init and max_iter must be >= 1")
        children = np.random.SeedSequence(int(self.random_state)).spawn(int(self.n_init))
        best = None
        histories, inertias = [], []
        for child in children:
            rng = np.random.default_rng(child)
            labels, centers, history, n_iter = lloyd(X, kmeans_plusplus(X, k, rng), self.max_iter)
            sse = within_cluster_sse(X, labels, centers)
            histories.append(history)
            inertias.append(sse)
            if best is None or sse < best[0]:
                best = (sse, labels, centers, history, n_iter)
        self.inertia_, self.labels_, self.cluster_centers_, self.sse_history_, self.n_iter_ = best
        self.restart_sse_histories_ = histories
        self.restart_inertias_ = inertias
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(squared_distances(X, self.cluster_centers_), axis=1)
