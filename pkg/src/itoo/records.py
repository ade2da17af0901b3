"""Domain records: fashion items, OOTD posts, user profiles, interactions.

Item/style vectors are plain float64 numpy arrays. An item vector is the
concatenation of the classifier, tagger, and search representations of one
item; a style vector is an item/OOTD/user vector centered by a sub-category
mean (same dimension).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable

import numpy as np

from .errors import ContractViolation
from .similarity import require_finite
from .taxonomy import CategoryHierarchy

INTERACTION_KINDS = ("view", "like", "upload", "follow")


@dataclass(frozen=True)
class EmbeddingBlock:
    """Per-item representation vectors from the three model heads."""

    f_classifier: np.ndarray
    f_tagger: np.ndarray
    f_search: np.ndarray

    def concat(self) -> np.ndarray:
        """The full item vector (classifier ++ tagger ++ search)."""
        return np.concatenate(
            [
                np.asarray(self.f_classifier, dtype=np.float64),
                np.asarray(self.f_tagger, dtype=np.float64),
                np.asarray(self.f_search, dtype=np.float64),
            ]
        )

    def validate(self, search_dim: int) -> None:
        for name, v in (
            ("classifier", self.f_classifier),
            ("tagger", self.f_tagger),
            ("search", self.f_search),
        ):
            require_finite(np.asarray(v), f"{name} embedding")
        if len(self.f_search) != search_dim:
            raise ContractViolation(
                f"search embedding dimension {len(self.f_search)} != configured {search_dim}"
            )


@dataclass(frozen=True)
class ItemRecord:
    """A retail fashion item with category, tags, and embeddings."""

    item_id: int
    sub_category: str
    color_tag: str | None = None
    attribute_tags: frozenset[tuple[str, str]] = frozenset()
    embeddings: EmbeddingBlock | None = None

    def validate(self, hierarchy: CategoryHierarchy, search_dim: int) -> None:
        hierarchy.super_of(self.sub_category)  # raises on unknown sub
        if self.embeddings is not None:
            self.embeddings.validate(search_dim)


@dataclass(frozen=True)
class OotdPost:
    """A user-uploaded outfit photo, decomposed into items."""

    ootd_id: str
    uploader_id: str
    item_ids: tuple[int, ...]
    hashtags: frozenset[str] = frozenset()
    created_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )

    def __post_init__(self):
        if not self.item_ids:
            # Every outfit photo contains at least one fashion item.
            raise ContractViolation(f"OOTD {self.ootd_id!r} has no items")
        normalized = frozenset(t.lower() for t in self.hashtags)
        object.__setattr__(self, "hashtags", normalized)


@dataclass(frozen=True)
class InteractionEvent:
    """One implicit-feedback record: (user, target, kind) at a timestamp.

    ``target_id`` is an OOTD id for view/like/upload and a user id for follow.
    """

    timestamp: datetime
    user_id: str
    kind: str
    target_id: str

    def __post_init__(self):
        if self.kind not in INTERACTION_KINDS:
            raise ContractViolation(
                f"unknown interaction kind {self.kind!r}; expected one of {INTERACTION_KINDS}"
            )


@dataclass(frozen=True)
class UserProfile:
    """Demographics, preference tags, follow edges, and a recency-ordered
    ring of recent interactions (newest first)."""

    user_id: str
    gender: str | None = None
    birth_year: int | None = None
    preference_tags: frozenset[str] = frozenset()
    follows: frozenset[str] = frozenset()
    recent_interactions: tuple[tuple[str, str, datetime], ...] = ()

    def __post_init__(self):
        if self.user_id in self.follows:
            raise ContractViolation(f"user {self.user_id!r} follows themself")
        times = [t for _, _, t in self.recent_interactions]
        if any(a < b for a, b in zip(times, times[1:])):
            raise ContractViolation(
                f"recent_interactions of {self.user_id!r} not sorted newest-first"
            )

    def segment_key(self) -> tuple[str, int | None]:
        """Demographic segment: (gender, decade age bucket by birth year)."""
        decade = None if self.birth_year is None else (self.birth_year // 10) * 10
        return (self.gender or "unknown", decade)


def recent_ootds(
    profile: UserProfile, kinds: Iterable[str] = ("view", "like"), limit: int | None = None
) -> list[str]:
    """Target OOTD ids of the user's most recent interactions of the given
    kinds, newest first."""
    wanted = set(kinds)
    out = [oid for oid, kind, _ in profile.recent_interactions if kind in wanted]
    return out if limit is None else out[:limit]
