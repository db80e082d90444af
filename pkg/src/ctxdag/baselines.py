"""Baseline estimators: population, clustered, and sample-specific networks.

The population baseline fits one DAG to all rows by penalized least squares
with a geometrically increasing acyclicity penalty. The clustered baselines
partition rows (by k-means on contexts, or by given labels) and fit one
population DAG per cluster. LIONESS produces one network per sample by
leave-one-out differencing of an aggregate linear fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .acyclicity import h, h_gradient
from .dag import project_to_dag
from .errors import InvalidInputError, TrainingDivergedError
from .optim import Adam
from .sem import Dataset, sem_loss_gradient

logger = logging.getLogger(__name__)


@dataclass
class PenaltySchedule:
    """Geometric schedule for the acyclicity penalty in :func:`notears_fit`.

    After each inner optimization round the penalty is multiplied by
    ``growth`` unless h dropped by at least the factor ``required_drop``;
    rounds stop once h falls below ``h_tol`` or the penalty exceeds
    ``penalty_max``.
    """

    penalty_init: float = 1.0
    growth: float = 10.0
    required_drop: float = 0.25
    penalty_max: float = 1e5
    h_tol: float = 1e-7
    max_rounds: int = 20
    inner_steps: int = 300
    learning_rate: float = 1e-2

    def __post_init__(self):
        if self.penalty_init <= 0 or self.growth <= 1 or self.penalty_max <= 0:
            raise InvalidInputError("penalty schedule values are out of range")
        if not 0 < self.required_drop < 1:
            raise InvalidInputError("required_drop must be in (0, 1)")
        if self.h_tol <= 0 or self.max_rounds < 1 or self.inner_steps < 1:
            raise InvalidInputError("penalty schedule values are out of range")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")


_INIT_SCALE = 0.01


def notears_fit(
    X,
    alpha_schedule: PenaltySchedule | None = None,
    l1_weight: float = 0.01,
    seed: int = 0,
    threshold: float = 0.05,
) -> np.ndarray:
    """One acyclic weighted graph for the whole matrix X.

    Minimizes ``sem_loss(X, W) + l1_weight * ||W||_1 + penalty * h(W)`` by
    Adam with the penalty raised on the given schedule, then thresholds
    weak entries and projects to an exact DAG. The diagonal is held at
    zero throughout.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError("X must be a nonempty 2-dimensional matrix")
    if not np.isfinite(X).all():
        raise InvalidInputError("X has non-finite entries")
    if l1_weight < 0:
        raise InvalidInputError("l1_weight must be >= 0")
    if threshold < 0:
        raise InvalidInputError("threshold must be >= 0")
    schedule = alpha_schedule if alpha_schedule is not None else PenaltySchedule()

    p = X.shape[1]
    rng = np.random.default_rng(seed)
    mask = 1.0 - np.eye(p)
    W = rng.normal(0.0, _INIT_SCALE, size=(p, p)) * mask
    optimizer = Adam({"W": W}, schedule.learning_rate)

    penalty = schedule.penalty_init
    h_prev = np.inf
    for round_index in range(1, schedule.max_rounds + 1):
        for _ in range(schedule.inner_steps):
            grad = sem_loss_gradient(X, W)
            grad += l1_weight * np.sign(W)
            grad += penalty * h_gradient(W)
            grad *= mask
            optimizer.step({"W": grad})
            W *= mask
            # Catch blow-ups before the next gradient call rejects NaN input.
            if not np.isfinite(W).all():
                raise TrainingDivergedError(round_index, "weights")
        h_now = h(W)
        if not np.isfinite(h_now):
            raise TrainingDivergedError(round_index, "h")
        if h_now < schedule.h_tol:
            break
        if h_now > schedule.required_drop * h_prev:
            penalty *= schedule.growth
            if penalty > schedule.penalty_max:
                break
        h_prev = h_now

    W = np.where(np.abs(W) > threshold, W, 0.0)
    return project_to_dag(W)


@dataclass
class PopulationModel:
    """A single graph applied to every sample."""

    W: np.ndarray

    def predict_networks(self, n: int) -> np.ndarray:
        return np.broadcast_to(self.W, (n,) + self.W.shape).copy()


def kmeans(
    points: np.ndarray, k: int, seed: int = 0, restarts: int = 5, max_iter: int = 100
):
    """Seeded Lloyd's algorithm with multiple restarts; returns (centers, labels).

    Restarts draw distinct initial centers from the rows; the lowest-inertia
    run wins (first one on ties). A cluster emptied during an update is
    reseeded to the point currently farthest from its center, so every
    returned cluster is nonempty.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
        raise InvalidInputError("points must be a nonempty 2-dimensional matrix")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for child in seeds:
        rng = np.random.default_rng(child)
        centers = points[rng.choice(n, size=k, replace=False)].copy()
        labels = np.zeros(n, dtype=int)
        for _ in range(max_iter):
            distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = distances.argmin(axis=1)
            for cluster in range(k):
                chosen = new_labels == cluster
                if chosen.any():
                    centers[cluster] = points[chosen].mean(axis=0)
                else:
                    farthest = distances[np.arange(n), new_labels].argmax()
                    centers[cluster] = points[farthest]
                    new_labels[farthest] = cluster
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        inertia = float(((points - centers[labels]) ** 2).sum())
        if best is None or inertia < best[0]:
            best = (inertia, centers, labels)
    return best[1], best[2]


@dataclass
class ClusteredModel:
    """Per-cluster graphs; a new context is served by its nearest center."""

    centers: np.ndarray  # (G, m)
    graphs: np.ndarray  # (G, p, p)
    labels: np.ndarray  # training-row cluster assignments
    warnings: list[str] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.graphs.shape[0]

    def assign(self, C) -> np.ndarray:
        C = np.asarray(C, dtype=float)
        distances = ((C[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return distances.argmin(axis=1)

    def predict_networks(self, C) -> np.ndarray:
        return self.graphs[self.assign(C)]


def clustered_fit(
    data: Dataset,
    n_clusters: int,
    use_oracle_labels: bool = False,
    alpha_schedule: PenaltySchedule | None = None,
    l1_weight: float = 0.01,
    seed: int = 0,
    threshold: float = 0.05,
) -> ClusteredModel:
    """Cluster rows, then fit one population graph per cluster.

    With ``use_oracle_labels`` the dataset's group labels define the
    clusters and ``n_clusters`` is ignored; otherwise k-means on the
    contexts is used. Cluster centers are always the context means, so
    prediction for a fresh context picks the nearest center's graph. With
    one cluster this reduces exactly to the population fit. A k-means
    solution with an empty cluster is refit with one fewer cluster and the
    event is recorded.
    """
    if not isinstance(data, Dataset):
        raise InvalidInputError("clustered_fit expects a Dataset")
    warnings_log: list[str] = []
    if use_oracle_labels:
        if data.group_labels is None:
            raise InvalidInputError("oracle clustering requires group labels")
        unique = np.unique(data.group_labels)
        labels = np.searchsorted(unique, data.group_labels)
        n_found = len(unique)
    else:
        if n_clusters < 1:
            raise InvalidInputError("n_clusters must be >= 1")
        k = min(n_clusters, data.n)
        while True:
            _, labels = kmeans(data.C, k, seed=seed)
            counts = np.bincount(labels, minlength=k)
            if counts.min() > 0 or k == 1:
                break
            message = f"k-means produced an empty cluster at k={k}; refitting with k={k - 1}"
            logger.warning(message)
            warnings_log.append(message)
            k -= 1
        n_found = k

    centers = np.stack([data.C[labels == g].mean(axis=0) for g in range(n_found)])
    graphs = np.stack(
        [
            notears_fit(
                data.X[labels == g],
                alpha_schedule=alpha_schedule,
                l1_weight=l1_weight,
                seed=seed,
                threshold=threshold,
            )
            for g in range(n_found)
        ]
    )
    return ClusteredModel(centers, graphs, labels, warnings_log)


class RidgeNetworkFit:
    """Per-column ridge regression of each variable on all others.

    The aggregate fit solves, for every column j,
    ``(G_jj + l2 I) w = g_j`` where G is the mean Gram matrix of the
    predictors and g_j the mean cross-moment with the target. The
    leave-one-out variant reuses the full-sample Gram and only downdates
    the cross-moments, which makes the estimator affine in the mean
    sufficient statistics; the leave-one-out differencing identity then
    holds exactly instead of only to O(1/n).
    """

    def __init__(self, l2: float = 0.1):
        if l2 <= 0:
            raise InvalidInputError("l2 must be positive")
        self.l2 = l2

    def _solvers(self, X: np.ndarray):
        n, p = X.shape
        gram = (X.T @ X) / n
        inverses = []
        for j in range(p):
            keep = [i for i in range(p) if i != j]
            system = gram[np.ix_(keep, keep)] + self.l2 * np.eye(p - 1)
            inverses.append((keep, np.linalg.inv(system)))
        return gram, inverses

    def fit(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        gram, inverses = self._solvers(X)
        p = X.shape[1]
        W = np.zeros((p, p))
        for j, (keep, inverse) in enumerate(inverses):
            W[keep, j] = inverse @ gram[keep, j]
        return W

    def loo_fits(self, X: np.ndarray) -> np.ndarray:
        """Stack of leave-one-out fits W_{-i}, shape (n, p, p)."""
        X = np.asarray(X, dtype=float)
        n, p = X.shape
        gram, inverses = self._solvers(X)
        W = np.zeros((n, p, p))
        for j, (keep, inverse) in enumerate(inverses):
            # Mean cross-moment without row i: (n * g_j - x_i x_ij) / (n - 1).
            cross = (n * gram[keep, j][None, :] - X[:, keep] * X[:, j : j + 1]) / (n - 1)
            W[:, keep, j] = cross @ inverse.T
        return W


def lioness_networks(X, fit=None, project: bool = False) -> np.ndarray:
    """One network per row by leave-one-out differencing, shape (n, p, p).

    ``W_i = n * (W_all - W_minus_i) + W_minus_i`` with ``W_all = fit(X)``
    and ``W_minus_i = fit(X without row i)``. The default estimator is
    :class:`RidgeNetworkFit`; a plain callable ``X -> W`` is also accepted
    and is refit on every leave-one-out submatrix.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise InvalidInputError("X must be a 2-dimensional matrix")
    if X.shape[0] < 2:
        raise InvalidInputError("need at least two rows for leave-one-out differencing")
    if not np.isfinite(X).all():
        raise InvalidInputError("X has non-finite entries")
    n = X.shape[0]
    if fit is None:
        fit = RidgeNetworkFit()
    if isinstance(fit, RidgeNetworkFit):
        W_all = fit.fit(X)
        W_loo = fit.loo_fits(X)
    else:
        W_all = fit(X)
        W_loo = np.stack([fit(np.delete(X, i, axis=0)) for i in range(n)])
    networks = n * (W_all[None, :, :] - W_loo) + W_loo
    if project:
        networks = np.stack([project_to_dag(W) for W in networks])
    return networks
