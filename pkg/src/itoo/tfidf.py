"""Time-decayed TF-IDF profiles over implicit user-OOTD feedback.

Users are documents. tf(u, o) sums the kind-weighted decay factors
beta**d of u's view/like events on o, d being whole days since the event;
idf(o) = ln((1+U)/(1+df(o))) + 1 with df the number of distinct users that
interacted with o. Profile weight = tf * idf.

The same machinery transposed (OOTDs as documents, users as terms) yields
the item-side profiles for item-based CF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping

from .errors import ContractViolation
from .records import InteractionEvent

DEFAULT_KIND_WEIGHTS = {"view": 1.0, "like": 3.0}


@dataclass(frozen=True)
class TfidfProfile:
    """Sparse nonnegative weight map; absent key reads as 0."""

    weights: dict[str, float] = field(default_factory=dict)

    def get(self, key: str) -> float:
        return self.weights.get(key, 0.0)

    def dot(self, other: "TfidfProfile") -> float:
        a, b = self.weights, other.weights
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b[k] for k, w in a.items() if k in b)

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))

    def max_weight(self) -> float:
        return max(self.weights.values(), default=0.0)

    def cosine_shrunk(self, other: "TfidfProfile", shrinkage: float) -> float:
        """Cosine with an additive shrinkage term in the denominator, damping
        similarity estimates built from few interactions."""
        denom = self.norm() * other.norm() + shrinkage
        if denom == 0.0:
            return 0.0
        return self.dot(other) / denom

    def __bool__(self) -> bool:
        return bool(self.weights)


def decay_factor(beta: float, days: int) -> float:
    if not 0.0 < beta < 1.0:
        raise ContractViolation(f"beta must be in (0, 1), got {beta}")
    if days < 0:
        raise ContractViolation(f"days must be >= 0, got {days}")
    return beta**days


def whole_days_since(event_time: datetime, now: datetime) -> int:
    delta = now - event_time
    if delta.total_seconds() < 0:
        raise ContractViolation(f"event at {event_time.isoformat()} is in the future")
    return int(delta.total_seconds() // 86400)


def decayed_tf(
    events: Iterable[InteractionEvent],
    now: datetime,
    beta: float,
    kind_weights: Mapping[str, float] | None = None,
) -> dict[str, dict[str, float]]:
    """user -> target -> sum of kind-weighted decay factors over the user's
    view/like events."""
    kind_weights = DEFAULT_KIND_WEIGHTS if kind_weights is None else kind_weights
    tf: dict[str, dict[str, float]] = {}
    for e in events:
        if e.kind not in ("view", "like"):
            continue
        d = whole_days_since(e.timestamp, now)
        weight = kind_weights.get(e.kind, 1.0) * decay_factor(beta, d)
        tf.setdefault(e.user_id, {})
        tf[e.user_id][e.target_id] = tf[e.user_id].get(e.target_id, 0.0) + weight
    return tf


def compute_idf(events: Iterable[InteractionEvent]) -> tuple[dict[str, float], int]:
    """Smoothed idf per target over view/like events, treating users as
    documents; also returns the document (user) count."""
    users_by_target: dict[str, set[str]] = {}
    users: set[str] = set()
    for e in events:
        if e.kind not in ("view", "like"):
            continue
        users.add(e.user_id)
        users_by_target.setdefault(e.target_id, set()).add(e.user_id)
    total = len(users)
    idf = {
        target: math.log((1 + total) / (1 + len(seen))) + 1.0
        for target, seen in users_by_target.items()
    }
    return idf, total


def default_idf(doc_count: int) -> float:
    """idf of a target no document has interacted with yet (df = 0)."""
    return math.log(1 + doc_count) + 1.0


def build_tfidf_profiles(
    events: Iterable[InteractionEvent],
    now: datetime,
    beta: float,
    kind_weights: Mapping[str, float] | None = None,
) -> dict[str, TfidfProfile]:
    """User -> decayed TF-IDF profile over OOTD targets. Only view/like
    events contribute. Future-dated events are rejected outright."""
    events = list(events)
    future = [e for e in events if (now - e.timestamp).total_seconds() < 0]
    if future:
        sample = ", ".join(
            f"{e.user_id}/{e.kind}/{e.target_id}@{e.timestamp.isoformat()}" for e in future[:3]
        )
        raise ContractViolation(f"{len(future)} future-dated events, e.g. {sample}")

    tf = decayed_tf(events, now, beta, kind_weights)
    idf, _ = compute_idf(events)
    return {
        user: TfidfProfile({o: w * idf[o] for o, w in per_user.items()})
        for user, per_user in tf.items()
    }


def build_item_profiles(
    events: Iterable[InteractionEvent],
    now: datetime,
    beta: float,
    kind_weights: Mapping[str, float] | None = None,
) -> dict[str, TfidfProfile]:
    """OOTD -> decayed TF-IDF profile over the users that interacted with it
    (the transposed view used by item-based CF)."""
    kind_weights = DEFAULT_KIND_WEIGHTS if kind_weights is None else kind_weights
    tf: dict[str, dict[str, float]] = {}
    targets_by_user: dict[str, set[str]] = {}
    for e in events:
        if e.kind not in ("view", "like"):
            continue
        d = whole_days_since(e.timestamp, now)
        weight = kind_weights.get(e.kind, 1.0) * decay_factor(beta, d)
        tf.setdefault(e.target_id, {})
        tf[e.target_id][e.user_id] = tf[e.target_id].get(e.user_id, 0.0) + weight
        targets_by_user.setdefault(e.user_id, set()).add(e.target_id)

    total_targets = len(tf)
    idf = {
        user: math.log((1 + total_targets) / (1 + len(targets))) + 1.0
        for user, targets in targets_by_user.items()
    }
    return {
        target: TfidfProfile({u: w * idf[u] for u, w in per_target.items()})
        for target, per_target in tf.items()
    }
