import numpy as np
import pytest

from ctxdag import (
    ArchetypeDictionary,
    InvalidInputError,
    backward,
    encode,
    generate_graph,
    load_model,
    make_encoder,
    save_model,
)
from ctxdag.mixture import model_from_payload, model_to_payload, softmax


def small_model(seed=0, kind="linear", K=3, p=4, m=2):
    rng = np.random.default_rng(seed)
    dictionary = ArchetypeDictionary.random_init(K, p, rng)
    encoder = make_encoder(kind, m, K, rng)
    return dictionary, encoder


def test_softmax_rows_are_simplex_points():
    rng = np.random.default_rng(0)
    logits = rng.normal(scale=5.0, size=(20, 4))
    z = softmax(logits)
    assert np.all(z >= 0)
    assert np.allclose(z.sum(axis=1), 1.0)


def test_softmax_shift_invariance():
    logits = np.array([[1.0, 2.0, 3.0]])
    assert np.allclose(softmax(logits), softmax(logits + 100.0))


def test_archetype_diagonals_are_clamped():
    rng = np.random.default_rng(1)
    dictionary = ArchetypeDictionary(rng.normal(size=(3, 5, 5)))
    for k in range(3):
        assert np.all(np.diag(dictionary.archetypes[k]) == 0.0)


def test_random_init_density_and_scale():
    rng = np.random.default_rng(2)
    dictionary = ArchetypeDictionary.random_init(4, 30, rng)
    offdiag = ~np.eye(30, dtype=bool)
    values = dictionary.archetypes[:, offdiag]
    density = (values != 0).mean()
    assert 0.2 < density < 0.4
    assert values[values != 0].std() == pytest.approx(0.1, abs=0.02)


def test_generate_graph_is_convex_combination():
    dictionary, _ = small_model()
    z = np.array([0.2, 0.5, 0.3])
    W = generate_graph(dictionary, z)
    expected = sum(z[k] * dictionary.archetypes[k] for k in range(3))
    assert np.allclose(W, expected)


def test_generate_graph_validates_simplex():
    dictionary, _ = small_model()
    with pytest.raises(InvalidInputError):
        generate_graph(dictionary, np.array([0.5, 0.5, 0.5]))
    with pytest.raises(InvalidInputError):
        generate_graph(dictionary, np.array([0.7, 0.3]))


def test_encoders_emit_simplex_rows():
    rng = np.random.default_rng(3)
    C = rng.normal(size=(10, 2))
    for kind in ("linear", "feed-forward"):
        _, encoder = small_model(kind=kind)
        z = encode(encoder, C)
        assert z.shape == (10, 3)
        assert np.allclose(z.sum(axis=1), 1.0)
        assert np.all(z >= 0)


def test_equal_contexts_give_equal_outputs():
    _, encoder = small_model(kind="feed-forward")
    C = np.ones((2, 2))
    z = encode(encoder, C)
    assert np.array_equal(z[0], z[1])


def test_backward_matches_finite_differences():
    eps = 1e-6
    for kind in ("linear", "feed-forward"):
        dictionary, encoder = small_model(seed=4, kind=kind)
        rng = np.random.default_rng(5)
        c = rng.normal(size=2)
        G = rng.normal(size=(4, 4))  # arbitrary upstream gradient

        def loss_value(dic, enc):
            z = encode(enc, c[None, :])[0]
            W = generate_graph(dic, z)
            return float((G * W).sum())

        arch_grads, enc_grads = backward(dictionary, encoder, c, G)
        base_arch = dictionary.archetypes
        for _ in range(6):
            k = rng.integers(0, 3)
            i, j = rng.integers(0, 4, size=2)
            if i == j:
                continue
            up, down = base_arch.copy(), base_arch.copy()
            up[k, i, j] += eps
            down[k, i, j] -= eps
            fd = (
                loss_value(ArchetypeDictionary(up), encoder)
                - loss_value(ArchetypeDictionary(down), encoder)
            ) / (2 * eps)
            assert arch_grads[k, i, j] == pytest.approx(fd, rel=1e-3, abs=1e-7)
        for name, grad in enc_grads.items():
            flat = encoder.params[name].ravel()
            gflat = grad.ravel()
            for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                orig = flat[idx]
                flat[idx] = orig + eps
                upval = loss_value(dictionary, encoder)
                flat[idx] = orig - eps
                downval = loss_value(dictionary, encoder)
                flat[idx] = orig
                fd = (upval - downval) / (2 * eps)
                assert gflat[idx] == pytest.approx(fd, rel=1e-3, abs=1e-7)


def test_backward_never_touches_archetype_diagonal():
    dictionary, encoder = small_model(seed=6)
    G = np.ones((4, 4))
    arch_grads, _ = backward(dictionary, encoder, np.zeros(2), G)
    for k in range(3):
        assert np.all(np.diag(arch_grads[k]) == 0.0)


def test_model_payload_round_trip_is_bit_exact():
    for kind in ("linear", "feed-forward"):
        dictionary, encoder = small_model(seed=7, kind=kind)
        payload = model_to_payload(dictionary, encoder)
        new_dictionary, new_encoder = model_from_payload(payload)
        assert np.array_equal(new_dictionary.archetypes, dictionary.archetypes)
        for name, value in encoder.params.items():
            assert np.array_equal(new_encoder.params[name], value)


def test_save_load_model_file_round_trip(tmp_path):
    dictionary, encoder = small_model(seed=8)
    path = tmp_path / "model.json"
    save_model(path, dictionary, encoder)
    new_dictionary, new_encoder = load_model(path)
    assert np.array_equal(new_dictionary.archetypes, dictionary.archetypes)
    assert new_encoder.kind == encoder.kind


def test_load_model_rejects_unknown_format_version(tmp_path):
    import json

    dictionary, encoder = small_model(seed=9)
    payload = model_to_payload(dictionary, encoder)
    payload["format_version"] = 999
    path = tmp_path / "model.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(InvalidInputError):
        load_model(path)


def test_make_encoder_rejects_unknown_kind():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidInputError):
        make_encoder("quadratic", 2, 3, rng)
