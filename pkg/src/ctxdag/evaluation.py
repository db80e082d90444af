"""Held-out evaluation: predictive MSE, structure recovery, ablations.

Continuous predictions are scored by per-sample reconstruction error on
held-out rows; structures are scored after thresholding, across a fixed
sweep of magnitude cutoffs. Method comparisons resample the training set
with replacement and refit, reporting the mean and variance of the
held-out MSE over the resamples.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    PenaltySchedule,
    clustered_fit,
    lioness_networks,
    notears_fit,
)
from .dag import binarize
from .errors import InvalidInputError
from .mixture import ArchetypeDictionary
from .notmad import TrainConfig, config_with, predict_networks, train, train_restarts
from .sem import Dataset

THRESHOLD_SWEEP = (0.01, 0.05, 0.1, 0.2, 0.3)


def per_row_mse(networks, X) -> np.ndarray:
    """Per-row reconstruction error ``||x - x W_row||^2 / p``."""
    X = np.asarray(X, dtype=float)
    networks = np.asarray(networks, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("X must be a nonempty 2-dimensional matrix")
    n, p = X.shape
    if networks.shape != (n, p, p):
        raise InvalidInputError(
            f"networks must be shaped ({n}, {p}, {p}), got {networks.shape}"
        )
    if not (np.isfinite(X).all() and np.isfinite(networks).all()):
        raise InvalidInputError("inputs have non-finite entries")
    residual = X - np.einsum("np,npq->nq", X, networks)
    return (residual**2).sum(axis=1) / p


def heldout_mse(networks, X) -> float:
    """Mean of :func:`per_row_mse` over the held-out rows."""
    return float(per_row_mse(networks, X).mean())


# ---------------------------------------------------------------------------
# Structure metrics
# ---------------------------------------------------------------------------


def _as_binary(A) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"adjacency must be square, got shape {A.shape}")
    return A.astype(bool)


def structural_hamming(estimated, truth) -> int:
    """Edit distance between structures; a reversed edge counts once."""
    est = _as_binary(estimated)
    tru = _as_binary(truth)
    if est.shape != tru.shape:
        raise InvalidInputError("structures must have the same shape")
    p = est.shape[0]
    distance = 0
    for i in range(p):
        for j in range(i + 1, p):
            est_edges = {(i, j)} if est[i, j] else set()
            est_edges |= {(j, i)} if est[j, i] else set()
            tru_edges = {(i, j)} if tru[i, j] else set()
            tru_edges |= {(j, i)} if tru[j, i] else set()
            # max of the two one-sided differences charges a reversal once
            # and an insertion or deletion per edge otherwise.
            distance += max(len(est_edges - tru_edges), len(tru_edges - est_edges))
    return distance


def edge_scores(estimated, truth) -> tuple[float, float, float]:
    """(precision, recall, F1) over directed off-diagonal edges.

    An empty estimate against a nonempty truth scores zero; two empty
    structures agree perfectly and score one.
    """
    est = _as_binary(estimated)
    tru = _as_binary(truth)
    if est.shape != tru.shape:
        raise InvalidInputError("structures must have the same shape")
    off = ~np.eye(est.shape[0], dtype=bool)
    est = est & off
    tru = tru & off
    true_pos = int((est & tru).sum())
    n_est = int(est.sum())
    n_tru = int(tru.sum())
    if n_est == 0 and n_tru == 0:
        return 1.0, 1.0, 1.0
    precision = true_pos / n_est if n_est else 0.0
    recall = true_pos / n_tru if n_tru else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@dataclass
class ThresholdPoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    shd: float


def threshold_sweep(
    estimated_networks, true_networks, thresholds=THRESHOLD_SWEEP
) -> list[ThresholdPoint]:
    """Structure metrics at each cutoff, averaged over the sample pairs.

    Both arguments are stacks (n, p, p); the truth is binarized at zero,
    the estimates at each swept threshold.
    """
    est = np.asarray(estimated_networks, dtype=float)
    tru = np.asarray(true_networks, dtype=float)
    if est.ndim == 2:
        est = est[None]
    if tru.ndim == 2:
        tru = tru[None]
    if est.shape != tru.shape:
        raise InvalidInputError("estimate and truth stacks must match in shape")
    points = []
    true_binary = [binarize(t) for t in tru]
    for threshold in thresholds:
        scores = np.array(
            [
                edge_scores(binarize(e, threshold), t)
                for e, t in zip(est, true_binary)
            ]
        )
        shd = float(
            np.mean(
                [
                    structural_hamming(binarize(e, threshold), t)
                    for e, t in zip(est, true_binary)
                ]
            )
        )
        points.append(
            ThresholdPoint(
                float(threshold),
                float(scores[:, 0].mean()),
                float(scores[:, 1].mean()),
                float(scores[:, 2].mean()),
                shd,
            )
        )
    return points


def best_f1_point(points: list[ThresholdPoint]) -> ThresholdPoint:
    return max(points, key=lambda point: point.f1)


def archetype_recovery(
    estimated: ArchetypeDictionary, truth: ArchetypeDictionary, threshold: float = 0.05
) -> float:
    """Mean edge-F1 of a greedy one-to-one matching of archetypes.

    Every true archetype must find a distinct estimated partner, so the
    estimated dictionary may not be smaller than the true one.
    """
    if estimated.K < truth.K:
        raise InvalidInputError(
            f"estimated dictionary has {estimated.K} archetypes but truth has {truth.K}"
        )
    if estimated.p != truth.p:
        raise InvalidInputError("archetype dictionaries must share p")
    est_bin = [binarize(A, threshold) for A in estimated.archetypes]
    tru_bin = [binarize(A) for A in truth.archetypes]
    f1 = np.array([[edge_scores(e, t)[2] for t in tru_bin] for e in est_bin])
    matched = []
    free_est = set(range(estimated.K))
    free_tru = set(range(truth.K))
    while free_tru:
        pairs = [(f1[e, t], e, t) for e in free_est for t in free_tru]
        score, e, t = max(pairs, key=lambda item: (item[0], -item[1], -item[2]))
        matched.append(score)
        free_est.remove(e)
        free_tru.remove(t)
    return float(np.mean(matched))


# ---------------------------------------------------------------------------
# Bootstrap comparison of methods
# ---------------------------------------------------------------------------


@dataclass
class MethodResult:
    mse_mean: float
    mse_var: float
    per_resample: list[float]


def bootstrap_mse(
    fit_method,
    train_data: Dataset,
    test_data: Dataset,
    resamples: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> MethodResult:
    """Mean and variance of held-out MSE over bootstrap refits.

    ``fit_method(train_subset, seed)`` must return a predictor mapping a
    test Dataset to a stack of per-row networks. Training sets are
    resampled with replacement; the test set stays fixed. A failure in any
    resample aborts the whole run with the resample index attached.
    """
    if resamples < 1:
        raise InvalidInputError("resamples must be >= 1")
    root = np.random.SeedSequence(seed)
    children = root.spawn(resamples)

    def run(index: int) -> float:
        child = children[index]
        rng = np.random.default_rng(child)
        rows = rng.integers(0, train_data.n, size=train_data.n)
        fit_seed = int(child.generate_state(1)[0])
        predictor = fit_method(train_data.subset(rows), fit_seed)
        return heldout_mse(predictor(test_data), test_data.X)

    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = list(pool.map(run, range(resamples)))
        else:
            values = [run(r) for r in range(resamples)]
    except Exception as exc:
        # map() surfaces the first failing future; recover its index.
        for r in range(resamples):
            try:
                run(r)
            except Exception as inner:
                raise RuntimeError(f"bootstrap resample {r} failed: {inner}") from inner
        raise RuntimeError(f"bootstrap resample failed: {exc}") from exc

    values_arr = np.array(values)
    variance = float(values_arr.var(ddof=1)) if resamples > 1 else 0.0
    return MethodResult(float(values_arr.mean()), variance, [float(v) for v in values])


def notmad_method(
    config: TrainConfig,
    project: bool = False,
    threshold: float = 0.0,
    restarts: int = 1,
):
    """Bootstrap-protocol adapter for the mixture model."""

    def fit(train_data: Dataset, seed: int):
        model = train_restarts(train_data, config_with(config, seed=seed), restarts)

        def predict(test_data: Dataset) -> np.ndarray:
            return predict_networks(model, test_data.C, project=project, threshold=threshold)

        return predict

    return fit


def population_method(
    alpha_schedule: PenaltySchedule | None = None,
    l1_weight: float = 0.01,
    threshold: float = 0.05,
):
    def fit(train_data: Dataset, seed: int):
        W = notears_fit(
            train_data.X, alpha_schedule=alpha_schedule, l1_weight=l1_weight,
            seed=seed, threshold=threshold,
        )

        def predict(test_data: Dataset) -> np.ndarray:
            return np.broadcast_to(W, (test_data.n,) + W.shape).copy()

        return predict

    return fit


def clustered_method(
    n_clusters: int,
    use_oracle_labels: bool = False,
    alpha_schedule: PenaltySchedule | None = None,
    l1_weight: float = 0.01,
    threshold: float = 0.05,
):
    def fit(train_data: Dataset, seed: int):
        model = clustered_fit(
            train_data,
            n_clusters,
            use_oracle_labels=use_oracle_labels,
            alpha_schedule=alpha_schedule,
            l1_weight=l1_weight,
            seed=seed,
            threshold=threshold,
        )

        def predict(test_data: Dataset) -> np.ndarray:
            return model.predict_networks(test_data.C)

        return predict

    return fit


def lioness_method(l2: float = 0.1):
    """Sample-specific networks computed on the evaluation cohort itself.

    The leave-one-out construction has no notion of an unseen sample, so
    the method is scored by running it directly on the held-out matrix; it
    ignores the training resample and therefore has zero bootstrap
    variance.
    """
    from .baselines import RidgeNetworkFit

    def fit(train_data: Dataset, seed: int):
        estimator = RidgeNetworkFit(l2)

        def predict(test_data: Dataset) -> np.ndarray:
            return lioness_networks(test_data.X, fit=estimator)

        return predict

    return fit


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------

ABLATION_VARIANTS = (
    "one_archetype_per_group",
    "mixture_group_average",
    "one_archetype_global",
    "full_mixture",
)


@dataclass
class AblationReport:
    """Overall and per-group held-out MSE for each ablation variant."""

    overall: dict[str, float]
    per_group: dict[str, dict[int, float]]
    per_row: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def difference_sigma(self, variant_a: str, variant_b: str) -> float:
        """Standard error of the paired per-row MSE difference a - b."""
        diff = self.per_row[variant_a] - self.per_row[variant_b]
        return float(diff.std(ddof=1) / np.sqrt(len(diff)))


def run_ablation(
    train_data: Dataset,
    test_data: Dataset,
    config: TrainConfig,
    restarts: int = 1,
) -> AblationReport:
    """Fit the four ablation variants and tabulate held-out MSE.

    Variants: one single-archetype model per group; the full mixture with
    predictions averaged within each group; one single-archetype model for
    everyone; and the full per-sample mixture. Both datasets must carry
    group labels (true ones on synthetic data, or cluster assignments).
    Every variant is fit with the same best-of-``restarts`` policy.
    """
    if train_data.group_labels is None or test_data.group_labels is None:
        raise InvalidInputError("run_ablation requires group labels on both datasets")
    groups = np.unique(np.concatenate([train_data.group_labels, test_data.group_labels]))
    n_test, p = test_data.X.shape

    predictions: dict[str, np.ndarray] = {}

    # One archetype per group: a separate K=1 fit on each group's rows.
    per_group_nets = np.zeros((n_test, p, p))
    k1 = config_with(config, K=1)
    for g in groups:
        rows = np.nonzero(train_data.group_labels == g)[0]
        if len(rows) == 0:
            raise InvalidInputError(f"group {g} has no training rows")
        model_g = train_restarts(train_data.subset(rows), k1, restarts)
        W_g = model_g.dictionary.archetypes[0]
        per_group_nets[test_data.group_labels == g] = W_g
    predictions["one_archetype_per_group"] = per_group_nets

    # Full mixture, shared by the two mixture-based variants.
    full_model = train_restarts(train_data, config, restarts)
    predictions["full_mixture"] = predict_networks(full_model, test_data.C)

    # Group-averaged mixture: average the predicted networks over each
    # group's training rows, then serve the group mean to its test rows.
    train_nets = predict_networks(full_model, train_data.C)
    averaged = np.zeros((n_test, p, p))
    for g in groups:
        group_mean = train_nets[train_data.group_labels == g].mean(axis=0)
        averaged[test_data.group_labels == g] = group_mean
    predictions["mixture_group_average"] = averaged

    # Single archetype for everyone (context-free degenerate model).
    global_model = train_restarts(train_data, k1, restarts)
    W_global = global_model.dictionary.archetypes[0]
    predictions["one_archetype_global"] = np.broadcast_to(W_global, (n_test, p, p)).copy()

    overall: dict[str, float] = {}
    per_group: dict[str, dict[int, float]] = {}
    per_row: dict[str, np.ndarray] = {}
    for name, networks in predictions.items():
        rows = per_row_mse(networks, test_data.X)
        per_row[name] = rows
        overall[name] = float(rows.mean())
        per_group[name] = {
            int(g): float(rows[test_data.group_labels == g].mean()) for g in groups
        }
    return AblationReport(overall, per_group, per_row)


def group_average_gap(
    train_data: Dataset,
    test_data: Dataset,
    config: TrainConfig,
    resamples: int = 10,
    seed: int = 0,
    restarts: int = 1,
) -> tuple[MethodResult, MethodResult]:
    """Paired bootstrap of sample-specific vs group-averaged predictions.

    Each resample trains one mixture model on a with-replacement copy of
    the training set and scores it twice on the fixed test set: once with
    per-sample networks and once with the networks averaged over each
    group, exactly as in :func:`run_ablation`. Returns the
    (full, group_averaged) MethodResults with paired per-resample lists.
    """
    if train_data.group_labels is None or test_data.group_labels is None:
        raise InvalidInputError("group_average_gap requires group labels on both datasets")
    if resamples < 1:
        raise InvalidInputError("resamples must be >= 1")
    groups = np.unique(np.concatenate([train_data.group_labels, test_data.group_labels]))
    children = np.random.SeedSequence(seed).spawn(resamples)

    full_values: list[float] = []
    averaged_values: list[float] = []
    for child in children:
        rng = np.random.default_rng(child)
        rows = rng.integers(0, train_data.n, size=train_data.n)
        subset = train_data.subset(rows)
        fit_config = config_with(config, seed=int(child.generate_state(1)[0]))
        model = train_restarts(subset, fit_config, restarts)
        nets = predict_networks(model, test_data.C)
        full_values.append(heldout_mse(nets, test_data.X))
        train_nets = predict_networks(model, subset.C)
        averaged = np.zeros_like(nets)
        for g in groups:
            mask = subset.group_labels == g
            if not mask.any():
                raise InvalidInputError(f"group {g} has no training rows in a resample")
            averaged[test_data.group_labels == g] = train_nets[mask].mean(axis=0)
        averaged_values.append(heldout_mse(averaged, test_data.X))

    def summarize(values: list[float]) -> MethodResult:
        arr = np.array(values)
        variance = float(arr.var(ddof=1)) if resamples > 1 else 0.0
        return MethodResult(float(arr.mean()), variance, [float(v) for v in values])

    return summarize(full_values), summarize(averaged_values)


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Aggregated evaluation results, serializable as JSON or flat CSV."""

    methods: dict[str, MethodResult] = field(default_factory=dict)
    structure: dict[str, list[ThresholdPoint]] = field(default_factory=dict)
    archetype_recovery: dict[str, float] = field(default_factory=dict)
    group_mse: dict[str, dict[int, float]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "methods": {
                name: {
                    "mse_mean": r.mse_mean,
                    "mse_var": r.mse_var,
                    "per_resample": r.per_resample,
                }
                for name, r in self.methods.items()
            },
            "structure": {
                name: [
                    {
                        "threshold": pt.threshold,
                        "precision": pt.precision,
                        "recall": pt.recall,
                        "f1": pt.f1,
                        "shd": pt.shd,
                    }
                    for pt in points
                ]
                for name, points in self.structure.items()
            },
            "archetype_recovery": dict(self.archetype_recovery),
            "group_mse": {
                name: {str(g): v for g, v in groups.items()}
                for name, groups in self.group_mse.items()
            },
        }

    def to_csv_rows(self) -> list[tuple]:
        """Flat rows (section, method, key, metric, value); see docs/formats.md."""
        rows: list[tuple] = []
        for name, result in self.methods.items():
            rows.append(("mse", name, "", "mse_mean", result.mse_mean))
            rows.append(("mse", name, "", "mse_var", result.mse_var))
            for index, value in enumerate(result.per_resample):
                rows.append(("mse", name, str(index), "resample_mse", value))
        for name, points in self.structure.items():
            for pt in points:
                key = f"{pt.threshold:g}"
                rows.append(("structure", name, key, "precision", pt.precision))
                rows.append(("structure", name, key, "recall", pt.recall))
                rows.append(("structure", name, key, "f1", pt.f1))
                rows.append(("structure", name, key, "shd", pt.shd))
        for name, value in self.archetype_recovery.items():
            rows.append(("recovery", name, "", "archetype_f1", value))
        for name, groups in self.group_mse.items():
            for g, value in groups.items():
                rows.append(("group_mse", name, str(g), "mse", value))
        return rows
