"""Vector and set similarity primitives used by every other module."""

from __future__ import annotations

from typing import Collection

import numpy as np

from .errors import ContractViolation


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Degenerate convention: if either vector has zero norm the result is 0,
    so entities with missing embeddings compare as neutral instead of
    raising deep inside a ranking loop.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    # Clip: accumulated rounding can push |cos| a hair past 1.
    return float(np.clip(float(np.dot(a, b)) / (na * nb), -1.0, 1.0))


def jaccard_similarity(a: Collection, b: Collection) -> float:
    """|a ∩ b| / |a ∪ b|; two empty sets compare as 0, not 1.

    Ranking tag-less pairs as perfectly similar would flood feeds with
    unrelated content, hence the 0 convention.
    """
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def unit_normalize(v: np.ndarray) -> np.ndarray:
    """Return v / ||v||. Zero vectors are a contract violation here: callers
    that tolerate them must check before normalizing."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ContractViolation("cannot normalize a zero vector")
    return v / n


def require_finite(v: np.ndarray, what: str = "vector") -> None:
    if not np.all(np.isfinite(v)):
        raise ContractViolation(f"{what} contains NaN/Inf components")
