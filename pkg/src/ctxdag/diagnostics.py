"""Self-contained invariant checks behind the ``check`` CLI subcommand.

Each check re-derives its expected value independently (truncated series,
finite differences, exhaustive enumeration) so a pass means the library
agrees with something other than itself.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .acyclicity import h, h_gradient, matrix_exponential
from .dag import binarize, is_dag, project_to_dag
from .mixture import ArchetypeDictionary, backward, encode, generate_graph, make_encoder
from .notmad import TrainConfig, notmad_objective, train
from .sem import Dataset, sem_loss, sem_loss_gradient


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _series_expm(A: np.ndarray, terms: int = 50) -> np.ndarray:
    total = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ A / k
        total = total + term
    return total


def _check_expm_series(rng) -> CheckResult:
    worst = 0.0
    for _ in range(20):
        p = int(rng.integers(2, 9))
        A = rng.normal(size=(p, p))
        A *= rng.uniform(0.5, 10.0) / np.abs(A).sum(axis=0).max()
        expected = _series_expm(A)
        got = matrix_exponential(A)
        worst = max(
            worst,
            float(np.linalg.norm(got - expected) / np.linalg.norm(expected)),
        )
    return CheckResult("matrix_exponential vs series", worst < 1e-9, f"max rel err {worst:.2e}")


def _check_h_vs_exact(rng) -> CheckResult:
    # Exhaustive at p = 3: smooth score ~0 exactly when a topological order exists.
    p = 3
    pairs = [(i, j) for i in range(p) for j in range(p) if i != j]
    for bits in itertools.product([0, 1], repeat=len(pairs)):
        W = np.zeros((p, p))
        for bit, (i, j) in zip(bits, pairs):
            W[i, j] = float(bit)
        if (h(W) < 1e-8) != is_dag(binarize(W)):
            return CheckResult("h matches exact DAG check", False, f"disagree on {W.tolist()}")
    return CheckResult("h matches exact DAG check", True, "exhaustive p=3")


def _finite_difference(func, W: np.ndarray, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        bump = np.zeros_like(W)
        bump[idx] = step
        grad[idx] = (func(W + bump) - func(W - bump)) / (2 * step)
    return grad


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return float(np.abs(a - b).max() / scale)


def _check_h_gradient(rng) -> CheckResult:
    worst = 0.0
    for _ in range(10):
        p = int(rng.integers(2, 7))
        W = rng.normal(0, 0.8, size=(p, p))
        worst = max(worst, _rel_err(h_gradient(W), _finite_difference(h, W)))
    return CheckResult("h_gradient vs finite differences", worst < 1e-4, f"max rel err {worst:.2e}")


def _check_sem_gradient(rng) -> CheckResult:
    worst = 0.0
    for _ in range(10):
        p = int(rng.integers(2, 7))
        X = rng.normal(size=(int(rng.integers(5, 30)), p))
        W = rng.normal(0, 0.5, size=(p, p))
        grad = sem_loss_gradient(X, W)
        fd = _finite_difference(lambda M: sem_loss(X, M), W)
        worst = max(worst, _rel_err(grad, fd))
    return CheckResult("sem gradient vs finite differences", worst < 1e-5, f"max rel err {worst:.2e}")


def _check_mixture_backward(rng) -> CheckResult:
    p, m, K = 4, 3, 3
    dictionary = ArchetypeDictionary(rng.normal(0, 0.5, size=(K, p, p)))
    encoder = make_encoder("feed-forward", m, K, rng, hidden_width=5)
    c = rng.normal(size=m)
    dL_dW = rng.normal(size=(p, p))

    def loss_at(archetypes, params):
        d = ArchetypeDictionary(archetypes)
        e = make_encoder("feed-forward", m, K, np.random.default_rng(0), hidden_width=5)
        for name in e.params:
            e.params[name][...] = params[name]
        W = generate_graph(d, encode(e, c))
        return float((W * dL_dW).sum())

    arch_grads, enc_grads = backward(dictionary, encoder, c, dL_dW)
    step = 1e-6
    worst = 0.0
    for idx in np.ndindex(dictionary.archetypes.shape):
        if idx[1] == idx[2]:
            continue  # the diagonal is clamped; its gradient is defined as zero
        bumped = dictionary.archetypes.copy()
        bumped[idx] += step
        upper = loss_at(bumped, encoder.params)
        bumped[idx] -= 2 * step
        lower = loss_at(bumped, encoder.params)
        fd = (upper - lower) / (2 * step)
        worst = max(worst, abs(fd - arch_grads[idx]) / max(abs(fd), 1e-6))
    for name, value in encoder.params.items():
        for idx in np.ndindex(value.shape):
            params = {k: v.copy() for k, v in encoder.params.items()}
            params[name][idx] += step
            upper = loss_at(dictionary.archetypes, params)
            params[name][idx] -= 2 * step
            lower = loss_at(dictionary.archetypes, params)
            fd = (upper - lower) / (2 * step)
            got = enc_grads[name][idx]
            worst = max(worst, abs(fd - got) / max(abs(fd), 1e-6))
    return CheckResult("mixture backward vs finite differences", worst < 1e-3, f"max rel err {worst:.2e}")


def _check_objective_gradient(rng) -> CheckResult:
    # Composed objective gradient against finite differences on a tiny model.
    p, m, K, n = 3, 2, 2, 6
    config = TrainConfig(K=K, epochs=0, batch_size=n, seed=3)
    data = Dataset(rng.normal(size=(n, p)), rng.normal(size=(n, m)))
    model = train(data, config)
    model.dictionary.archetypes[...] = ArchetypeDictionary(
        rng.normal(0, 0.4, size=(K, p, p))
    ).archetypes

    def objective_value():
        return notmad_objective(model, data.X, data.C)[0]

    step = 1e-6
    worst = 0.0
    from .acyclicity import h_gradient as hg
    from .mixture import softmax

    Z = encode(model.encoder, data.C)
    W = np.einsum("bk,kpq->bpq", Z, model.dictionary.archetypes)
    residual = data.X - np.einsum("bp,bpq->bq", data.X, W)
    E = matrix_exponential(W * W)
    dW = -2.0 * np.einsum("bp,bq->bpq", data.X, residual)
    dW += config.alpha * np.swapaxes(E, -1, -2) * (2.0 * W)
    analytic = np.einsum("bk,bpq->kpq", Z, dW)
    analytic += config.beta * np.sign(model.dictionary.archetypes)
    analytic += config.gamma * hg(model.dictionary.archetypes)
    analytic *= 1.0 - np.eye(p)

    for idx in np.ndindex(model.dictionary.archetypes.shape):
        if idx[1] == idx[2]:
            continue
        if abs(model.dictionary.archetypes[idx]) < 1e-3:
            continue  # keep clear of the L1 kink
        original = model.dictionary.archetypes[idx]
        model.dictionary.archetypes[idx] = original + step
        upper = objective_value()
        model.dictionary.archetypes[idx] = original - step
        lower = objective_value()
        model.dictionary.archetypes[idx] = original
        fd = (upper - lower) / (2 * step)
        worst = max(worst, abs(fd - analytic[idx]) / max(abs(fd), abs(analytic[idx]), 1e-6))
    return CheckResult("objective gradient vs finite differences", worst < 1e-4, f"max rel err {worst:.2e}")


def _check_projection(rng) -> CheckResult:
    for _ in range(50):
        p = int(rng.integers(3, 9))
        W = rng.normal(size=(p, p)) * (1 - np.eye(p))
        projected = project_to_dag(W)
        again = project_to_dag(projected)
        kept = projected != 0
        ok = (
            is_dag(binarize(projected))
            and np.array_equal(projected, again)
            and np.allclose(projected[kept], W[kept])
        )
        if not ok:
            return CheckResult("projection contract", False, "violation found")
    return CheckResult("projection contract", True, "50 random dense matrices")


def _check_train_determinism(rng) -> CheckResult:
    data = Dataset(rng.normal(size=(40, 3)), rng.normal(size=(40, 2)))
    config = TrainConfig(K=2, epochs=3, batch_size=16, seed=11)
    a = train(data, config)
    b = train(data, config)
    same = np.array_equal(a.dictionary.archetypes, b.dictionary.archetypes) and all(
        np.array_equal(a.encoder.params[k], b.encoder.params[k]) for k in a.encoder.params
    )
    return CheckResult("training is seed-deterministic", same, "two identical runs")


def run_self_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        _check_expm_series(rng),
        _check_h_vs_exact(rng),
        _check_h_gradient(rng),
        _check_sem_gradient(rng),
        _check_mixture_backward(rng),
        _check_objective_gradient(rng),
        _check_projection(rng),
        _check_train_determinism(rng),
    ]
