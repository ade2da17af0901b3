"""Style vectors and semantic similarity.

An item's style vector is its concatenated representation centered by the
mean of its sub-category, so it captures the style residual rather than the
category identity. OOTD style vectors average the member items; user style
vectors average the recently viewed/liked OOTDs with recency weighting.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ColdStartError, ContractViolation
from .records import ItemRecord, OotdPost
from .similarity import cosine_similarity, jaccard_similarity


def sub_category_means(items: Iterable[ItemRecord]) -> dict[str, np.ndarray]:
    """Arithmetic mean of the concatenated item vectors per sub-category."""
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for item in items:
        if item.embeddings is None:
            continue
        v = item.embeddings.concat()
        if item.sub_category in sums:
            sums[item.sub_category] += v
        else:
            sums[item.sub_category] = v.copy()
        counts[item.sub_category] = counts.get(item.sub_category, 0) + 1
    return {sub: sums[sub] / counts[sub] for sub in sums}


def item_style_vector(item: ItemRecord, means: Mapping[str, np.ndarray]) -> np.ndarray:
    if item.embeddings is None:
        raise ContractViolation(f"item {item.item_id} has no embeddings")
    if item.sub_category not in means:
        raise ContractViolation(f"no sub-category mean for {item.sub_category!r}")
    return item.embeddings.concat() - means[item.sub_category]


def item_style_vectors(
    items: Iterable[ItemRecord], means: Mapping[str, np.ndarray]
) -> dict[int, np.ndarray]:
    return {
        item.item_id: item_style_vector(item, means)
        for item in items
        if item.embeddings is not None
    }


def ootd_style_vector(ootd: OotdPost, item_styles: Mapping[int, np.ndarray]) -> np.ndarray:
    missing = [i for i in ootd.item_ids if i not in item_styles]
    if missing:
        raise ContractViolation(f"OOTD {ootd.ootd_id!r} references unknown items {missing}")
    return np.mean([item_styles[i] for i in ootd.item_ids], axis=0)


def recency_weights(count: int, history_window: int, alpha: float) -> np.ndarray:
    """w_m = ((H - m + 1) / H) ** alpha for m = 1..count, m=1 most recent."""
    if history_window < 1:
        raise ContractViolation("history window must be >= 1")
    if count < 1 or count > history_window:
        raise ContractViolation(f"count must be in [1, {history_window}], got {count}")
    m = np.arange(1, count + 1, dtype=np.float64)
    return ((history_window - m + 1.0) / history_window) ** alpha


def user_style_vector(
    recent_ootd_ids: Sequence[str],
    ootd_styles: Mapping[str, np.ndarray],
    history_window: int,
    alpha: float,
) -> np.ndarray:
    """Recency-weighted average of the styles of the user's most recent
    viewed/liked OOTDs (newest first); raises on an empty usable history so
    callers fall back to segment/weekly best."""
    usable = [o for o in recent_ootd_ids if o in ootd_styles][:history_window]
    if not usable:
        raise ColdStartError("no usable view/like history")
    weights = recency_weights(len(usable), history_window, alpha)
    stacked = np.stack([ootd_styles[o] for o in usable])
    return (weights[:, None] * stacked).sum(axis=0) / weights.sum()


def semantic_ootd_similarity(
    style_a: np.ndarray,
    style_b: np.ndarray,
    hashtags_a: Iterable[str],
    hashtags_b: Iterable[str],
    lambda_ootd: float,
) -> float:
    """Blend of style-vector cosine and hashtag Jaccard."""
    return lambda_ootd * cosine_similarity(style_a, style_b) + (
        1.0 - lambda_ootd
    ) * jaccard_similarity(hashtags_a, hashtags_b)


def semantic_user_similarity(
    style_a: np.ndarray | None,
    style_b: np.ndarray | None,
    tags_a: Iterable[str],
    tags_b: Iterable[str],
    lambda_user: float,
) -> float:
    """Blend of user-style cosine and preference-tag Jaccard. A missing
    style vector (cold start) degrades to the Jaccard term alone."""
    jac = jaccard_similarity(tags_a, tags_b)
    if style_a is None or style_b is None:
        return jac
    return lambda_user * cosine_similarity(style_a, style_b) + (1.0 - lambda_user) * jac
