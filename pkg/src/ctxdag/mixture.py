"""Context-conditioned mixtures of archetypal graphs.

A model holds K archetype weight matrices and a context encoder. A context
vector c is mapped to simplex weights z = softmax(encoder(c)), and the
sample-specific graph is the convex combination ``W = sum_k z_k * W_k``
with the diagonal structurally clamped to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

MODEL_FORMAT_VERSION = 1

ENCODER_KINDS = ("linear", "feed-forward")

# Archetype initialization: small dense noise times a sparsity mask.
_INIT_SCALE = 0.1
_INIT_DENSITY = 0.3


@dataclass
class ArchetypeDictionary:
    """K learnable archetype matrices stacked as an array of shape (K, p, p).

    The diagonal of every archetype is clamped to zero at construction and
    kept at zero by the training code (its gradient is identically zero),
    so no mixture can ever carry a self-loop.
    """

    archetypes: np.ndarray

    def __post_init__(self):
        self.archetypes = np.asarray(self.archetypes, dtype=float)
        if self.archetypes.ndim != 3 or self.archetypes.shape[1] != self.archetypes.shape[2]:
            raise InvalidInputError(
                f"archetypes must be shaped (K, p, p), got {self.archetypes.shape}"
            )
        if self.archetypes.shape[0] < 1:
            raise InvalidInputError("need at least one archetype")
        if not np.isfinite(self.archetypes).all():
            raise InvalidInputError("archetypes have non-finite entries")
        self.archetypes = self.archetypes.copy()
        np.einsum("kii->ki", self.archetypes)[...] = 0.0

    @property
    def K(self) -> int:
        return self.archetypes.shape[0]

    @property
    def p(self) -> int:
        return self.archetypes.shape[1]

    @classmethod
    def random_init(cls, K: int, p: int, rng: np.random.Generator) -> "ArchetypeDictionary":
        """Entries i.i.d. Normal(0, 0.1^2) kept with probability 0.3, zero diagonal."""
        values = rng.normal(0.0, _INIT_SCALE, size=(K, p, p))
        mask = rng.random(size=(K, p, p)) < _INIT_DENSITY
        return cls(values * mask)


def _offdiagonal_mask(p: int) -> np.ndarray:
    return 1.0 - np.eye(p)


class LinearEncoder:
    """Affine map from context to archetype logits."""

    kind = "linear"

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=float)
        self.bias = np.asarray(bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise InvalidInputError("linear encoder parameter shapes are inconsistent")

    @classmethod
    def create(cls, m: int, K: int, rng: np.random.Generator) -> "LinearEncoder":
        # Small symmetric init scaled by fan-in.
        weight = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, K))
        return cls(weight, np.zeros(K))

    @property
    def m(self) -> int:
        return self.weight.shape[0]

    @property
    def K(self) -> int:
        return self.weight.shape[1]

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def logits(self, C: np.ndarray) -> np.ndarray:
        return C @ self.weight + self.bias

    def logits_cached(self, C: np.ndarray):
        return self.logits(C), C

    def grads(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        C = cache
        return {"weight": C.T @ dlogits, "bias": dlogits.sum(axis=0)}


class FeedForwardEncoder:
    """One-hidden-layer tanh network from context to archetype logits."""

    kind = "feed-forward"

    def __init__(self, weight1, bias1, weight2, bias2):
        self.weight1 = np.asarray(weight1, dtype=float)
        self.bias1 = np.asarray(bias1, dtype=float)
        self.weight2 = np.asarray(weight2, dtype=float)
        self.bias2 = np.asarray(bias2, dtype=float)
        ok = (
            self.weight1.ndim == 2
            and self.bias1.shape == (self.weight1.shape[1],)
            and self.weight2.ndim == 2
            and self.weight2.shape[0] == self.weight1.shape[1]
            and self.bias2.shape == (self.weight2.shape[1],)
        )
        if not ok:
            raise InvalidInputError("feed-forward encoder parameter shapes are inconsistent")

    @classmethod
    def create(
        cls, m: int, K: int, rng: np.random.Generator, hidden_width: int = 16
    ) -> "FeedForwardEncoder":
        if hidden_width < 1:
            raise InvalidInputError("hidden_width must be >= 1")
        weight1 = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, hidden_width))
        weight2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_width), size=(hidden_width, K))
        return cls(weight1, np.zeros(hidden_width), weight2, np.zeros(K))

    @property
    def m(self) -> int:
        return self.weight1.shape[0]

    @property
    def K(self) -> int:
        return self.weight2.shape[1]

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {
            "weight1": self.weight1,
            "bias1": self.bias1,
            "weight2": self.weight2,
            "bias2": self.bias2,
        }

    def logits(self, C: np.ndarray) -> np.ndarray:
        hidden = np.tanh(C @ self.weight1 + self.bias1)
        return hidden @ self.weight2 + self.bias2

    def logits_cached(self, C: np.ndarray):
        hidden = np.tanh(C @ self.weight1 + self.bias1)
        return hidden @ self.weight2 + self.bias2, (C, hidden)

    def grads(self, cache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        C, hidden = cache
        dhidden = (dlogits @ self.weight2.T) * (1.0 - hidden**2)
        return {
            "weight1": C.T @ dhidden,
            "bias1": dhidden.sum(axis=0),
            "weight2": hidden.T @ dlogits,
            "bias2": dlogits.sum(axis=0),
        }


def make_encoder(
    kind: str, m: int, K: int, rng: np.random.Generator, hidden_width: int = 16
):
    if kind == "linear":
        return LinearEncoder.create(m, K, rng)
    if kind == "feed-forward":
        return FeedForwardEncoder.create(m, K, rng, hidden_width)
    raise InvalidInputError(f"unknown encoder kind {kind!r}; expected one of {ENCODER_KINDS}")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for overflow safety."""
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    return weights / weights.sum(axis=-1, keepdims=True)


def _check_context(encoder, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if not np.isfinite(c).all():
        raise InvalidInputError("context has non-finite entries")
    if c.shape[-1] != encoder.m:
        raise InvalidInputError(
            f"context has {c.shape[-1]} features but the encoder expects {encoder.m}"
        )
    return c


def encode(encoder, c) -> np.ndarray:
    """Simplex weights for a context vector (m,) or a batch (n, m)."""
    c = _check_context(encoder, c)
    return softmax(encoder.logits(c))


def _check_simplex(z, K: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (K,):
        raise InvalidInputError(f"z must have {K} entries, got shape {z.shape}")
    if not np.isfinite(z).all() or z.min() < 0 or abs(z.sum() - 1.0) > 1e-6:
        raise InvalidInputError("z must lie on the probability simplex")
    return z


def generate_graph(dictionary: ArchetypeDictionary, z) -> np.ndarray:
    """Mixture graph ``sum_k z_k * W_k`` for simplex weights z."""
    z = _check_simplex(z, dictionary.K)
    return np.einsum("k,kpq->pq", z, dictionary.archetypes)


def backward(dictionary: ArchetypeDictionary, encoder, c, dL_dW):
    """Chain-rule pullback of a loss gradient in the generated graph.

    Given dL/dW at W = generate_graph(dictionary, encode(encoder, c)),
    returns the gradient with respect to the archetypes, shaped (K, p, p)
    with an exactly zero diagonal, and a dict of encoder parameter
    gradients. With K = 1 the softmax is constant so the encoder gradient
    is exactly zero.
    """
    c = _check_context(encoder, np.asarray(c, dtype=float))
    if c.ndim != 1:
        raise InvalidInputError("backward expects a single context vector")
    dL_dW = np.asarray(dL_dW, dtype=float)
    p = dictionary.p
    if dL_dW.shape != (p, p):
        raise InvalidInputError(f"dL_dW must be shaped ({p}, {p}), got {dL_dW.shape}")
    if not np.isfinite(dL_dW).all():
        raise InvalidInputError("dL_dW has non-finite entries")

    z = encode(encoder, c)
    masked_grad = dL_dW * _offdiagonal_mask(p)
    arch_grads = z[:, None, None] * masked_grad[None, :, :]
    # Archetype diagonals contribute nothing (they are clamped), so dz only
    # sees the off-diagonal part of dL_dW.
    dz = np.einsum("pq,kpq->k", masked_grad, dictionary.archetypes)
    dlogits = z * (dz - float(z @ dz))
    enc_grads = encoder.grads(encoder.logits_cached(c[None, :])[1], dlogits[None, :])
    return arch_grads, enc_grads


def model_to_payload(dictionary: ArchetypeDictionary, encoder) -> dict:
    """Self-describing JSON payload: dims, encoder kind and parameters, archetypes."""
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "p": dictionary.p,
        "m": encoder.m,
        "K": dictionary.K,
        "encoder": {
            "kind": encoder.kind,
            "params": {name: value.tolist() for name, value in encoder.params.items()},
        },
        "archetypes": dictionary.archetypes.tolist(),
    }


def model_from_payload(payload: dict):
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise InvalidInputError(
            f"unsupported model format version {version!r}; expected {MODEL_FORMAT_VERSION}"
        )
    kind = payload["encoder"]["kind"]
    params = {k: np.asarray(v, dtype=float) for k, v in payload["encoder"]["params"].items()}
    if kind == "linear":
        encoder = LinearEncoder(params["weight"], params["bias"])
    elif kind == "feed-forward":
        encoder = FeedForwardEncoder(
            params["weight1"], params["bias1"], params["weight2"], params["bias2"]
        )
    else:
        raise InvalidInputError(f"unknown encoder kind {kind!r} in model payload")
    dictionary = ArchetypeDictionary(np.asarray(payload["archetypes"], dtype=float))
    if dictionary.p != payload["p"] or dictionary.K != payload["K"] or encoder.m != payload["m"]:
        raise InvalidInputError("model payload dimensions are inconsistent")
    if encoder.K != dictionary.K:
        raise InvalidInputError("encoder output width does not match the archetype count")
    return dictionary, encoder


def save_model(path, dictionary: ArchetypeDictionary, encoder) -> None:
    """Write the model as a single JSON file (bit-exact float round trip)."""
    from .fileio import atomic_write_text

    payload = model_to_payload(dictionary, encoder)
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return model_from_payload(payload)
