import numpy as np
import pytest

from ctxdag import InvalidInputError, SynthSpec, binarize, generate, is_dag
from ctxdag.evaluation import heldout_mse, per_row_mse


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        SynthSpec(p=1)
    with pytest.raises(InvalidInputError):
        SynthSpec(k_true=0)
    with pytest.raises(InvalidInputError):
        SynthSpec(n_train=0)
    with pytest.raises(InvalidInputError):
        SynthSpec(edge_density=0.0)
    with pytest.raises(InvalidInputError):
        SynthSpec(edge_density=1.0)
    with pytest.raises(InvalidInputError):
        SynthSpec(weight_range=(0.0, 1.0))
    with pytest.raises(InvalidInputError):
        SynthSpec(weight_range=(2.0, 1.0))
    with pytest.raises(InvalidInputError):
        SynthSpec(noise_scale=0.0)
    with pytest.raises(InvalidInputError):
        SynthSpec(mixing="other")


def test_spec_dict_round_trip():
    spec = SynthSpec(p=5, m=3, k_true=2, mixing="one-hot", weight_range=(0.7, 1.3))
    values = spec.to_dict()
    assert values["weight_range"] == [0.7, 1.3]  # JSON friendly
    assert SynthSpec.from_dict(values) == spec
    with pytest.raises(InvalidInputError, match="badger"):
        SynthSpec.from_dict({"badger": 1})


def small_spec(**overrides):
    defaults = dict(p=6, m=3, k_true=3, n_train=80, n_test=40, seed=0)
    defaults.update(overrides)
    return SynthSpec(**defaults)


def test_generate_shapes_and_split():
    spec = small_spec()
    truth = generate(spec)
    n = spec.n_train + spec.n_test
    assert truth.X.shape == (n, spec.p)
    assert truth.C.shape == (n, spec.m)
    assert truth.Z.shape == (n, spec.k_true)
    assert truth.group_labels.shape == (n,)
    assert truth.mixing_matrix.shape == (spec.k_true, spec.m)
    assert truth.networks.shape == (n, spec.p, spec.p)
    assert sorted(truth.topological_order) == list(range(spec.p))

    train_data, test_data = truth.train(), truth.test()
    assert train_data.n == spec.n_train and test_data.n == spec.n_test
    assert np.array_equal(train_data.X, truth.X[: spec.n_train])
    assert np.array_equal(test_data.C, truth.C[spec.n_train :])
    assert np.array_equal(train_data.group_labels, truth.group_labels[: spec.n_train])
    assert truth.train_networks().shape == (spec.n_train, spec.p, spec.p)
    assert truth.test_networks().shape == (spec.n_test, spec.p, spec.p)


def test_generate_without_test_rows_refuses_test_split():
    truth = generate(small_spec(n_test=0))
    with pytest.raises(InvalidInputError):
        truth.test()


def test_generate_is_deterministic_per_seed():
    a = generate(small_spec())
    b = generate(small_spec())
    c = generate(small_spec(seed=1))
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.dictionary.archetypes, b.dictionary.archetypes)
    assert not np.array_equal(a.X, c.X)


def test_mixture_weights_are_simplex_rows_with_matching_labels():
    truth = generate(small_spec())
    assert truth.Z.min() >= 0.0
    assert truth.Z.sum(axis=1) == pytest.approx(np.ones(truth.n))
    assert np.array_equal(truth.Z.argmax(axis=1), truth.group_labels)


def test_one_hot_mixing_serves_pure_archetypes():
    truth = generate(small_spec(mixing="one-hot"))
    expected = np.zeros_like(truth.Z)
    expected[np.arange(truth.n), truth.group_labels] = 1.0
    assert np.array_equal(truth.Z, expected)
    for row in range(0, truth.n, 17):
        k = truth.group_labels[row]
        assert np.array_equal(truth.networks[row], truth.dictionary.archetypes[k])


def test_archetypes_share_one_topological_order():
    truth = generate(small_spec(edge_density=0.5))
    order = truth.topological_order
    rank = np.empty(truth.spec.p, dtype=int)
    rank[order] = np.arange(truth.spec.p)
    for A in truth.dictionary.archetypes:
        assert is_dag(binarize(A))
        rows, cols = np.nonzero(A)
        assert (rank[rows] < rank[cols]).all()


def test_every_random_mixture_of_archetypes_is_acyclic():
    truth = generate(small_spec(edge_density=0.5, seed=3))
    rng = np.random.default_rng(0)
    for _ in range(50):
        weights = rng.dirichlet(np.ones(truth.spec.k_true))
        mixed = np.einsum("k,kpq->pq", weights, truth.dictionary.archetypes)
        assert is_dag(binarize(mixed))


def test_archetype_weights_respect_density_and_range():
    lo, hi = 0.7, 1.4
    sparse = generate(small_spec(edge_density=0.1, weight_range=(lo, hi), seed=5))
    dense = generate(small_spec(edge_density=0.6, weight_range=(lo, hi), seed=5))
    for truth in (sparse, dense):
        values = truth.dictionary.archetypes[truth.dictionary.archetypes != 0]
        assert (np.abs(values) >= lo).all() and (np.abs(values) <= hi).all()
    assert np.count_nonzero(sparse.dictionary.archetypes) < np.count_nonzero(
        dense.dictionary.archetypes
    )


def test_observations_follow_the_per_sample_networks():
    # the residual X - X W is exactly the injected noise, so its mean
    # square per coordinate concentrates at noise_scale^2
    spec = SynthSpec(p=10, m=4, k_true=3, n_train=4000, n_test=0, seed=7)
    truth = generate(spec)
    residual_power = per_row_mse(truth.networks, truth.X).mean()
    assert residual_power == pytest.approx(1.0, rel=0.05)

    scaled = generate(
        SynthSpec(p=10, m=4, k_true=3, n_train=4000, n_test=0, noise_scale=2.0, seed=7)
    )
    scaled_power = per_row_mse(scaled.networks, scaled.X).mean()
    assert scaled_power == pytest.approx(4.0, rel=0.05)


def test_true_networks_explain_more_than_an_empty_graph():
    truth = generate(SynthSpec(p=8, m=3, k_true=3, n_train=500, n_test=0, seed=9))
    zero = np.zeros_like(truth.networks)
    assert heldout_mse(truth.networks, truth.X) < heldout_mse(zero, truth.X)


def test_contexts_are_informative_about_groups():
    # a simple nearest-mean rule on contexts beats chance at predicting
    # the group, otherwise context-specific estimation would be hopeless
    truth = generate(small_spec(n_train=400, n_test=200, seed=2, mixing="one-hot"))
    train_data, test_data = truth.train(), truth.test()
    means = np.stack(
        [
            train_data.C[train_data.group_labels == g].mean(axis=0)
            for g in range(truth.spec.k_true)
        ]
    )
    distances = ((test_data.C[:, None, :] - means[None]) ** 2).sum(axis=2)
    accuracy = (distances.argmin(axis=1) == test_data.group_labels).mean()
    assert accuracy > 1.5 / truth.spec.k_true
