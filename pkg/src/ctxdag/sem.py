"""Linear structural equation models over DAGs, and the dataset container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dag import binarize, check_weighted_graph, topological_order
from .errors import InvalidInputError


@dataclass
class Dataset:
    """Rows of observations X (n, p) with per-row contexts C (n, m).

    ``group_labels`` is an optional integer label per row (true archetype
    assignments on synthetic data, or cluster assignments).
    """

    X: np.ndarray
    C: np.ndarray
    group_labels: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        if self.X.ndim != 2 or self.C.ndim != 2:
            raise InvalidInputError("X and C must be 2-dimensional")
        if self.X.shape[0] != self.C.shape[0]:
            raise InvalidInputError(
                f"X has {self.X.shape[0]} rows but C has {self.C.shape[0]}"
            )
        if self.X.shape[0] < 1:
            raise InvalidInputError("dataset must have at least one row")
        if self.X.shape[1] < 1 or self.C.shape[1] < 1:
            raise InvalidInputError("X and C must each have at least one column")
        if not (np.isfinite(self.X).all() and np.isfinite(self.C).all()):
            raise InvalidInputError("dataset has non-finite entries")
        if self.group_labels is not None:
            self.group_labels = np.asarray(self.group_labels, dtype=int)
            if self.group_labels.shape != (self.X.shape[0],):
                raise InvalidInputError("group_labels must have one entry per row")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        labels = None if self.group_labels is None else self.group_labels[indices]
        return Dataset(self.X[indices], self.C[indices], labels)


def sample_sem(W, n: int, noise_scale: float = 1.0, rng_seed: int = 0) -> np.ndarray:
    """Draw n rows from the linear Gaussian SEM ``X_j = X W[:, j] + eps_j``.

    W must be acyclic; columns are filled in a topological order so every
    parent is available when its children are generated.
    """
    W = check_weighted_graph(W)
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if noise_scale <= 0:
        raise InvalidInputError("noise_scale must be positive")
    order = topological_order(binarize(W))
    if order is None:
        raise InvalidInputError("weight matrix must be acyclic to sample")
    rng = np.random.default_rng(rng_seed)
    p = W.shape[0]
    noise = rng.normal(0.0, noise_scale, size=(n, p))
    X = np.zeros((n, p))
    for j in order:
        X[:, j] = X @ W[:, j] + noise[:, j]
    return X


def _check_loss_inputs(X, W):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("X must be a nonempty 2-dimensional matrix")
    if not np.isfinite(X).all():
        raise InvalidInputError("X has non-finite entries")
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise InvalidInputError(f"weight matrix must be square, got shape {W.shape}")
    if not np.isfinite(W).all():
        raise InvalidInputError("weight matrix has non-finite entries")
    if X.shape[1] != W.shape[0]:
        raise InvalidInputError(
            f"X has {X.shape[1]} columns but W is {W.shape[0]}x{W.shape[1]}"
        )
    return X, W


def sem_loss(X, W) -> float:
    """Least-squares reconstruction loss ``||X - XW||_F^2 / (2n)``."""
    X, W = _check_loss_inputs(X, W)
    residual = X - X @ W
    return float((residual**2).sum() / (2.0 * X.shape[0]))


def sem_loss_gradient(X, W) -> np.ndarray:
    """Gradient of :func:`sem_loss` in W: ``-X^T (X - XW) / n``."""
    X, W = _check_loss_inputs(X, W)
    residual = X - X @ W
    return -(X.T @ residual) / X.shape[0]
