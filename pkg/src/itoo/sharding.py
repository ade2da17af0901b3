"""Sharded vector search and the per-super-category index catalog.

Items are assigned to shards by a splitmix hash of their id modulo the
shard count; each shard is an independent HNSW index. Searches fan out to
every shard with the same k and merge by (score desc, id asc), so with an
exhaustive ef_search the merged result equals the unsharded exhaustive
result exactly.

The catalog holds one live sharded index per super-category. Rebuilds
construct a complete replacement off to the side and swap it in atomically
(a single reference assignment); a failed build leaves the old catalog
untouched.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import hnsw
from .errors import ContractViolation, SchemaError


def shard_of(item_id: int, shard_count: int) -> int:
    """Deterministic shard assignment: splitmix64 of the id, mod count."""
    z = (item_id + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) % shard_count


@dataclass(frozen=True)
class ShardedIndex:
    shards: tuple[hnsw.HnswIndex, ...]

    def __len__(self) -> int:
        return sum(len(s) for s in self.shards)

    @property
    def shard_count(self) -> int:
        return len(self.shards)

    def shard_for(self, item_id: int) -> int:
        return shard_of(item_id, self.shard_count)


def build_sharded(
    vectors: Mapping[int, np.ndarray],
    params: hnsw.HnswParams | None = None,
    shard_count: int = 1,
) -> ShardedIndex:
    if shard_count < 1:
        raise ContractViolation(f"shard_count must be >= 1, got {shard_count}")
    params = params or hnsw.HnswParams()
    partitions: list[dict[int, np.ndarray]] = [{} for _ in range(shard_count)]
    for item_id, vec in vectors.items():
        partitions[shard_of(int(item_id), shard_count)][int(item_id)] = vec
    shards = tuple(hnsw.build(part, params) for part in partitions)
    return ShardedIndex(shards)


def search_sharded(
    index: ShardedIndex, query: np.ndarray, k: int, ef_search: int | None = None
) -> list[tuple[int, float]]:
    """Fan out to every shard with the same k, merge by (score desc, id asc),
    truncate to k."""
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    merged: list[tuple[int, float]] = []
    for shard in index.shards:
        merged.extend(shard.search(query, k, ef_search))
    merged.sort(key=lambda pair: (-pair[1], pair[0]))
    return merged[:k]


@dataclass(frozen=True)
class IndexCatalog:
    """One live sharded index per super-category, plus build metadata."""

    indexes: dict[str, ShardedIndex] = field(default_factory=dict)
    built_at: float = 0.0
    version: int = 0

    def search(
        self, super_category: str, query: np.ndarray, k: int, ef_search: int | None = None
    ) -> list[tuple[int, float]]:
        if super_category not in self.indexes:
            return []
        return search_sharded(self.indexes[super_category], query, k, ef_search)

    def item_count(self) -> int:
        return sum(len(s) for s in self.indexes.values())


def rebuild_catalog(
    catalog: IndexCatalog,
    vectors_by_super: Mapping[str, Mapping[int, np.ndarray]],
    params: hnsw.HnswParams | None = None,
    shard_count: int = 1,
) -> IndexCatalog:
    """Build fresh indexes for every super-category, then return the complete
    replacement. Raises without side effects on any build failure, so the
    caller's current catalog stays live."""
    params = params or hnsw.HnswParams()
    fresh: dict[str, ShardedIndex] = {}
    dims = {
        sup: {len(np.asarray(v).ravel()) for v in vecs.values()}
        for sup, vecs in vectors_by_super.items()
    }
    for sup, dset in dims.items():
        if len(dset) > 1:
            raise SchemaError(f"mixed vector dimensions {sorted(dset)} under {sup!r}")
    for sup, vecs in vectors_by_super.items():
        fresh[sup] = build_sharded(vecs, params, shard_count)
    return IndexCatalog(indexes=fresh, built_at=time.time(), version=catalog.version + 1)
