import itertools

import numpy as np
import pytest

from ctxdag import (
    InvalidInputError,
    binarize,
    h,
    is_dag,
    mixture_compatibility_check,
    project_to_dag,
    topological_order,
)


def random_zero_diag(rng, p, scale=1.0):
    W = rng.normal(scale=scale, size=(p, p))
    np.fill_diagonal(W, 0.0)
    return W


def test_binarize_threshold_is_strict():
    W = np.array([[0.0, 0.5], [-0.5, 0.0]])
    A = binarize(W, 0.5)
    assert not A.any()
    A = binarize(W, 0.49)
    assert A[0, 1] and A[1, 0]


def test_topological_order_chain():
    W = np.zeros((3, 3))
    W[0, 1] = 1.0
    W[1, 2] = 1.0
    assert topological_order(binarize(W)) == [0, 1, 2]


def test_topological_order_cycle_returns_none():
    A = np.array([[0, 1], [1, 0]], dtype=bool)
    assert topological_order(A) is None


def test_is_dag_small_cases():
    assert is_dag(np.zeros((1, 1), dtype=bool))
    assert is_dag(np.triu(np.ones((4, 4), dtype=bool), k=1))
    assert not is_dag(np.tril(np.ones((3, 3)), k=-1) + np.triu(np.ones((3, 3)), k=1))


def test_project_identity_on_dags():
    W = np.array([[0.0, 0.5, 0.0], [0.0, 0.0, -0.3], [0.0, 0.0, 0.0]])
    assert np.array_equal(project_to_dag(W), W)


def test_project_three_cycle_keeps_heavy_edges():
    # One 3-cycle 0->1->2->0 plus the extra edge 0->2; only the weakest
    # cycle edge (weight 0.2) should go.
    W = np.array([[0.0, 0.5, 0.4], [0.0, 0.0, 0.3], [0.2, 0.0, 0.0]])
    P = project_to_dag(W)
    assert P[2, 0] == 0.0
    assert P[0, 1] == 0.5 and P[0, 2] == 0.4 and P[1, 2] == 0.3
    assert is_dag(binarize(P))


def test_project_output_always_acyclic_and_weight_preserving():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = rng.integers(2, 9)
        W = random_zero_diag(rng, p)
        P = project_to_dag(W)
        assert is_dag(binarize(P))
        kept = P != 0.0
        assert np.array_equal(P[kept], W[kept])
        # idempotent
        assert np.array_equal(project_to_dag(P), P)


def test_project_contains_threshold_subgraph_small_instances():
    # The greedy re-insertion must keep at least the graph found by pure
    # magnitude thresholding at the acyclicity-critical cut.
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = rng.integers(2, 6)
        W = random_zero_diag(rng, p)
        mask = rng.random((p, p)) < 0.4
        W = W * mask
        if (W != 0).sum() > 8:
            continue
        P = project_to_dag(W)
        magnitudes = sorted({0.0} | set(np.abs(W[W != 0]).ravel()))
        cut = None
        for t in magnitudes:
            if is_dag(binarize(W, t)):
                cut = t
                break
        base = binarize(W, cut)
        assert (binarize(P) | base == binarize(P)).all()


def test_project_exhaustive_optimal_containment_three_nodes():
    # On 3-node graphs, greedy projection keeps a maximal acyclic subgraph:
    # no removed edge can be added back without creating a cycle.
    for bits in itertools.product([0, 1], repeat=6):
        W = np.zeros((3, 3))
        entries = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        for b, (i, j) in zip(bits, entries):
            if b:
                W[i, j] = 0.1 * (i * 3 + j + 1)
        P = project_to_dag(W)
        assert is_dag(binarize(P))
        for i, j in entries:
            if W[i, j] != 0 and P[i, j] == 0:
                Q = P.copy()
                Q[i, j] = W[i, j]
                assert not is_dag(binarize(Q))


def test_compatibility_chain_union():
    W1 = np.zeros((3, 3))
    W1[0, 1] = 1.0
    W2 = np.zeros((3, 3))
    W2[1, 2] = 1.0
    result = mixture_compatibility_check(W1, W2)
    assert result
    assert result.union_acyclic
    assert result.dag_fraction == 1.0


def test_compatibility_cyclic_union_is_vacuous():
    W1 = np.zeros((2, 2))
    W1[0, 1] = 1.0
    W2 = np.zeros((2, 2))
    W2[1, 0] = 1.0
    result = mixture_compatibility_check(W1, W2)
    assert result
    assert not result.union_acyclic
    assert result.dag_fraction == 0.0


def test_compatibility_upper_triangular_pairs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        W1 = np.triu(rng.normal(size=(8, 8)) * (rng.random((8, 8)) < 0.3), k=1)
        W2 = np.triu(rng.normal(size=(8, 8)) * (rng.random((8, 8)) < 0.3), k=1)
        assert mixture_compatibility_check(W1, W2, trials=20)


def test_compatibility_rejects_mismatched_shapes():
    with pytest.raises(InvalidInputError):
        mixture_compatibility_check(np.zeros((2, 2)), np.zeros((3, 3)))


def test_compatibility_rejects_bad_trials():
    with pytest.raises(InvalidInputError):
        mixture_compatibility_check(np.zeros((2, 2)), np.zeros((2, 2)), trials=0)


def test_h_and_projection_agree_on_acyclicity():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p = rng.integers(2, 7)
        W = random_zero_diag(rng, p) * (rng.random((p, p)) < 0.4)
        assert (h(np.where(binarize(W), 1.0, 0.0)) < 1e-8) == is_dag(binarize(W))
