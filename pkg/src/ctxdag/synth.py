"""Synthetic data with known context-dependent network structure.

All archetypes are drawn against one shared topological order, so every
convex mixture of them is acyclic by construction. Contexts are standard
Gaussian; mixture weights come from a fixed random linear map of the
context, either softmaxed ("simplex-smooth") or winner-take-all
("one-hot"). Observations are then drawn row by row from each sample's
own linear SEM.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidInputError
from .mixture import ArchetypeDictionary, softmax
from .sem import Dataset

MIXING_MODES = ("simplex-smooth", "one-hot")

# Mixing logits get standard deviation ~2 so simplex weights range from
# near-uniform to near-one-hot across samples.
_LOGIT_SCALE = 2.0


@dataclass
class SynthSpec:
    """Knobs for :func:`generate`; defaults give a mid-sized benchmark."""

    p: int = 10
    m: int = 4
    k_true: int = 3
    n_train: int = 2000
    n_test: int = 500
    edge_density: float = 0.3
    weight_range: tuple[float, float] = (0.5, 2.0)
    noise_scale: float = 1.0
    mixing: str = "simplex-smooth"
    seed: int = 0

    def __post_init__(self):
        if self.p < 2 or self.m < 1 or self.k_true < 1:
            raise InvalidInputError("p must be >= 2 and m, k_true >= 1")
        if self.n_train < 1 or self.n_test < 0:
            raise InvalidInputError("n_train must be >= 1 and n_test >= 0")
        if not 0.0 < self.edge_density < 1.0:
            raise InvalidInputError("edge_density must be in (0, 1)")
        lo, hi = self.weight_range
        if not 0.0 < lo <= hi:
            raise InvalidInputError("weight_range must satisfy 0 < low <= high")
        if self.noise_scale <= 0:
            raise InvalidInputError("noise_scale must be positive")
        if self.mixing not in MIXING_MODES:
            raise InvalidInputError(f"mixing must be one of {MIXING_MODES}")

    def to_dict(self) -> dict:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values["weight_range"] = list(self.weight_range)
        return values

    @classmethod
    def from_dict(cls, values: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise InvalidInputError(f"unknown spec keys: {', '.join(unknown)}")
        values = dict(values)
        if "weight_range" in values:
            values["weight_range"] = tuple(values["weight_range"])
        return cls(**values)


@dataclass
class SynthTruth:
    """Everything the generator knows: archetypes, mixing, and the data."""

    spec: SynthSpec
    dictionary: ArchetypeDictionary
    mixing_matrix: np.ndarray  # (k_true, m)
    topological_order: np.ndarray  # shared node order, position -> node
    Z: np.ndarray  # (n, k_true) simplex weights per sample
    group_labels: np.ndarray  # argmax archetype per sample
    X: np.ndarray
    C: np.ndarray
    _networks: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def networks(self) -> np.ndarray:
        """Per-sample ground-truth graphs, shape (n, p, p)."""
        if self._networks is None:
            self._networks = np.einsum("nk,kpq->npq", self.Z, self.dictionary.archetypes)
        return self._networks

    def train(self) -> Dataset:
        s = slice(0, self.spec.n_train)
        return Dataset(self.X[s], self.C[s], self.group_labels[s])

    def test(self) -> Dataset:
        if self.spec.n_test == 0:
            raise InvalidInputError("spec has no test rows")
        s = slice(self.spec.n_train, None)
        return Dataset(self.X[s], self.C[s], self.group_labels[s])

    def train_networks(self) -> np.ndarray:
        return self.networks[: self.spec.n_train]

    def test_networks(self) -> np.ndarray:
        return self.networks[self.spec.n_train :]


def _random_archetypes(spec: SynthSpec, order: np.ndarray, rng) -> ArchetypeDictionary:
    # Edges only point forward along the shared order, so any nonnegative
    # combination of the archetypes is acyclic.
    lo, hi = spec.weight_range
    archetypes = np.zeros((spec.k_true, spec.p, spec.p))
    for k in range(spec.k_true):
        for a in range(spec.p):
            for b in range(a + 1, spec.p):
                if rng.random() < spec.edge_density:
                    weight = rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0)
                    archetypes[k, order[a], order[b]] = weight
    return ArchetypeDictionary(archetypes)


def generate(spec: SynthSpec) -> SynthTruth:
    """Deterministic-per-seed draw of archetypes, contexts, mixtures, and data."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_train + spec.n_test

    order = rng.permutation(spec.p)
    dictionary = _random_archetypes(spec, order, rng)
    mixing_matrix = rng.normal(0.0, _LOGIT_SCALE / np.sqrt(spec.m), size=(spec.k_true, spec.m))

    C = rng.normal(0.0, 1.0, size=(n, spec.m))
    logits = C @ mixing_matrix.T
    group_labels = logits.argmax(axis=1)
    if spec.mixing == "simplex-smooth":
        Z = softmax(logits)
    else:
        Z = np.zeros_like(logits)
        Z[np.arange(n), group_labels] = 1.0

    networks = np.einsum("nk,kpq->npq", Z, dictionary.archetypes)
    noise = rng.normal(0.0, spec.noise_scale, size=(n, spec.p))
    X = np.zeros((n, spec.p))
    for j in order:
        X[:, j] = np.einsum("ni,ni->n", X, networks[:, :, j]) + noise[:, j]

    return SynthTruth(
        spec=spec,
        dictionary=dictionary,
        mixing_matrix=mixing_matrix,
        topological_order=order,
        Z=Z,
        group_labels=group_labels,
        X=X,
        C=C,
        _networks=networks,
    )
