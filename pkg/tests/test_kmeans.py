import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bpdhar.kmeans import HistogramKMeans, kmeans_plusplus, lloyd, within_cluster_sse

from oracles import brute_force_sse, random_histograms, same_partition


def test_brute_force_oracle_small_case():
    # 1-D points 0, 1, 10, 11 with k=2: {0,1}, {10,11} -> SSE 1.0
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert brute_force_sse(X, 2) == pytest.approx(1.0)
    assert brute_force_sse(X, 1) == pytest.approx(101.0)


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = random_histograms(rng, 10)
    for k in (1, 2, 3):
        km = HistogramKMeans(k, random_state=seed).fit(X)
        assert km.inertia_ == pytest.approx(brute_force_sse(X, k), rel=1e-9, abs=1e-12)


def test_k1_centroid_is_mean():
    X = random_histograms(np.random.default_rng(0), 30)
    km = HistogramKMeans(1).fit(X)
    np.testing.assert_allclose(km.cluster_centers_[0], X.mean(axis=0), atol=1e-15)


def test_two_one_hot_groups():
    X = np.zeros((10, 7))
    X[:6, 0] = 1
    X[6:, 3] = 1
    km = HistogramKMeans(2, random_state=4).fit(X)
    assert same_partition(km.labels_, [0] * 6 + [1] * 4)
    assert km.inertia_ == 0.0
    assert sorted(map(tuple, km.cluster_centers_)) == sorted(map(tuple, X[[0, 6]]))


def test_k_larger_than_n():
    with pytest.raises(ValueError):
        HistogramKMeans(4).fit(np.eye(3))


def test_identical_points_more_clusters_than_distinct():
    X = np.tile([0.5, 0.5, 0, 0, 0, 0, 0], (5, 1))
    km = HistogramKMeans(3, random_state=1).fit(X)
    assert np.bincount(km.labels_, minlength=3).min() >= 1
    assert km.inertia_ == 0.0


def test_deterministic():
    X = random_histograms(np.random.default_rng(5), 40)
    a = HistogramKMeans(4, random_state=9).fit(X)
    b = HistogramKMeans(4, random_state=9).fit(X)
    np.testing.assert_array_equal(a.labels_, b.labels_)
    np.testing.assert_array_equal(a.cluster_centers_, b.cluster_centers_)


def test_estimator_params_and_predict():
    X = random_histograms(np.random.default_rng(2), 20)
    km = HistogramKMeans(3, n_init=4, random_state=1)
    assert km.get_params() == {"n_clusters": 3, "n_init": 4, "max_iter": 300, "random_state": 1}
    np.testing.assert_array_equal(km.fit_predict(X), km.predict(X))
    assert len(km.restart_sse_histories_) == 4
    assert km.inertia_ == min(km.restart_inertias_)


def test_max_iter_caps_iterations():
    X = random_histograms(np.random.default_rng(3), 60)
    km = HistogramKMeans(5, n_init=1, max_iter=1).fit(X)
    assert km.n_iter_ == 1 and len(km.sse_history_) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40), st.integers(1, 6))
def test_lloyd_properties(seed, n, k):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    X = random_histograms(rng, n)
    labels, centers, history, _ = lloyd(X, kmeans_plusplus(X, k, rng))
    # SSE never increases between iterations
    assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(history, history[1:]))
    # every cluster is non-empty and each centroid is the mean of its members
    assert np.bincount(labels, minlength=k).min() >= 1
    for c in range(k):
        np.testing.assert_allclose(centers[c], X[labels == c].mean(axis=0), atol=1e-9)
    assert within_cluster_sse(X, labels, centers) == pytest.approx(history[-1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    # well separated groups so the optimum is unique
    X = np.repeat(np.eye(7)[[0, 3, 6]], 5, axis=0) * 0.9 + 0.1 / 7
    X = X + rng.uniform(0, 1e-3, size=X.shape)
    X /= X.sum(axis=1, keepdims=True)
    perm = rng.permutation(len(X))
    a = HistogramKMeans(3, random_state=0).fit(X).labels_
    b = HistogramKMeans(3, random_state=0).fit(X[perm]).labels_
    assert same_partition(a[perm], b)
