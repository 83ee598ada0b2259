import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recole.cluster import (ClusterError, ClusterModel, EmptyClusterError, assign_unseen, fit_clusters,
                            kmeans, random_clusters, sample_from_cluster, sample_negatives, sample_positive)
from recole.kg import build_graph

from oracles import best_two_partition


def test_four_points_two_pairs():
    X = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], dtype=float)
    cm = fit_clusters(X, X, 2, seed=0, restarts=5)
    a = cm.assignment
    assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]
    assert abs(cm.objective - 1.0) < 1e-12
    assert abs(best_two_partition(X) - 1.0) < 1e-12


def test_identical_points_repair():
    X = np.ones((5, 2))
    lab, C, obj, _ = kmeans(X, 2, seed=0)
    assert set(lab) == {0, 1} and obj == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_restarts_reach_optimum(n, seed):
    X = np.random.default_rng(seed).normal(size=(n, 2))
    cm = fit_clusters(X, X, 2, seed=seed, restarts=20)
    assert abs(cm.objective - best_two_partition(X)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_lloyd_monotone(n, k, seed):
    if n < k:
        return
    X = np.random.default_rng(seed).normal(size=(n, 2))
    _, _, obj, hist = kmeans(X, k, seed)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert obj == hist[-1]


def test_too_few_relations():
    with pytest.raises(ClusterError):
        kmeans(np.zeros((1, 2)), 2)


def test_random_clusters_reproducible_and_balanced():
    X = np.random.default_rng(0).normal(size=(11, 2))
    a = random_clusters(X, X, 3, seed=7)
    b = random_clusters(X, X, 3, seed=7)
    assert np.array_equal(a.assignment, b.assignment)
    assert sorted(np.bincount(a.assignment)) == [3, 4, 4]


def _cm(assignment, ref=None):
    assignment = np.asarray(assignment)
    ref = np.eye(len(assignment)) if ref is None else ref
    k = assignment.max() + 1
    return ClusterModel(int(k), assignment, np.zeros((k, 2)), ref, 0.0)


def test_assign_unseen_exact_row():
    ref = np.random.default_rng(0).normal(size=(5, 4))
    cm = _cm([0, 1, 1, 0, 1], ref)
    for r in range(5):
        assert assign_unseen(ref[r], cm) == cm.assignment[r]


def test_assign_unseen_tie_lowest_relation():
    ref = np.array([[1.0, 0.0], [0.0, 1.0]])
    cm = _cm([1, 0], ref)
    assert assign_unseen(np.array([1.0, 1.0]), cm) == 1  # relation 0 wins the tie


def test_assign_unseen_zero_vector():
    with pytest.raises(ClusterError, match="override"):
        assign_unseen(np.zeros(2), _cm([0, 1]))


def test_assign_unseen_kin_tokens():
    rng = np.random.default_rng(1)
    kin = rng.normal(size=50)
    of = 0.1 * rng.normal(size=50)
    work = rng.normal(size=50)
    uncle, aunt, father = (kin + 0.05 * rng.normal(size=50) for _ in range(3))
    ref = np.stack([(father + of) / 2, (work + of) / 2, (uncle + of) / 2])
    cm = _cm([0, 1, 0], ref)
    assert assign_unseen((aunt + of) / 2, cm) == cm.assignment[2]


def _kg_two_rel(n0=10, n1=1):
    raw = [(f"a{i}", "r0", f"b{i}") for i in range(n0)] + [(f"c{i}", "r1", f"d{i}") for i in range(n1)]
    return build_graph(raw)


def test_positive_exclusion_and_fallback():
    g = build_graph([("a", "r0", "b"), ("c", "r0", "d"), ("e", "r1", "f")])
    cm = _cm([0, 1])
    rng = np.random.default_rng(0)
    t1, t2 = g.triplets[0], g.triplets[1]
    assert all(sample_positive(t1, g, cm, rng) == t2 for _ in range(20))
    t3 = g.triplets[2]
    assert sample_positive(t3, g, cm, rng) == t3


def test_two_stage_uniform_law():
    g = _kg_two_rel(10, 1)
    cm = _cm([0, 0])
    rng = np.random.default_rng(42)
    n = 10_000
    hits = sum(sample_from_cluster(0, g, cm, rng).rel == 1 for _ in range(n))
    assert abs(hits / n - 0.5) < 0.02


def test_negatives_one_per_other_cluster():
    raw = [(f"a{i}", f"r{i % 4}", f"b{i}") for i in range(12)]
    g = build_graph(raw)
    cm = _cm([0, 1, 2, 3])
    t = g.triplets[0]
    negs = sample_negatives(t, g, cm, np.random.default_rng(3))
    assert len(negs) == 3 and sorted(cm.assignment[n.rel] for n in negs) == [1, 2, 3]
    again = sample_negatives(t, g, cm, np.random.default_rng(3))
    assert negs == again
    cm2 = _cm([0, 1, 0, 1])
    assert len(sample_negatives(t, g, cm2, np.random.default_rng(3))) == 1


def test_negatives_empty_cluster():
    g = build_graph([("a", "r0", "b"), ("c", "r1", "d")]).without(lambda t: t.rel == 1)
    with pytest.raises(EmptyClusterError):
        sample_negatives(g.triplets[0], g, _cm([0, 1]), np.random.default_rng(0))
