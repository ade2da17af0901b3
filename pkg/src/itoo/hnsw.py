"""Hierarchical navigable small-world index over unit vectors.

Distance is 1 - cosine on pre-normalized float32 vectors. Queries run the
textbook hierarchical beam search: greedy descent through the upper layers,
then a beam of ``ef_search`` on the base layer.

Construction is batch-oriented to match the serving story (indexes are
rebuilt nightly; there are no online inserts): per layer, each node's
candidate pool is the exact ``ef_construction`` nearest members, computed
with blocked matrix products, and edges are then picked by the
closer-to-query-than-to-any-selected diversity rule with nearest fill.
Layer 0 holds up to 2M neighbors per node, upper layers up to M. Builds are
deterministic given the seed (levels) and the input id set.

Search results are sorted by (score desc, id asc) so sharded and unsharded
runs are comparable.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from numba import njit

from .errors import ContractViolation, ParseError, SchemaError

MAX_LEVEL = 48
_BLOCK_ROWS = 256


class ZeroVectorError(ContractViolation):
    """Raised when a build input contains zero vectors; carries their ids."""

    def __init__(self, item_ids: list[int]):
        super().__init__(f"zero vectors rejected for ids {item_ids}")
        self.item_ids = item_ids


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 64
    seed: int = 2024

    def __post_init__(self):
        if self.m < 2:
            raise ContractViolation("M must be >= 2")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise ContractViolation("ef parameters must be >= 1")

    @property
    def level_multiplier(self) -> float:
        return 1.0 / math.log(self.m)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always", fastmath=True)
def _dist_to(vecs, node, q):
    s = np.float32(0.0)
    for j in range(q.shape[0]):
        s += vecs[node, j] * q[j]
    # Clamp away f32 rounding so scores (1 - dist) stay inside [-1, 1] and
    # tie-breaks agree between sharded merges and single-index sorts.
    d = 1.0 - float(s)
    if d < 0.0:
        return 0.0
    if d > 2.0:
        return 2.0
    return d


@njit(cache=True, inline="always")
def _heap_push_min(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    c = n
    while c > 0:
        p = (c - 1) >> 1
        if hd[p] <= hd[c]:
            break
        hd[p], hd[c] = hd[c], hd[p]
        hi[p], hi[c] = hi[c], hi[p]
        c = p
    return n + 1


@njit(cache=True, inline="always")
def _heap_pop_min(hd, hi, n):
    n -= 1
    hd[0] = hd[n]
    hi[0] = hi[n]
    p = 0
    while True:
        l = 2 * p + 1
        if l >= n:
            break
        r = l + 1
        c = l
        if r < n and hd[r] < hd[l]:
            c = r
        if hd[p] <= hd[c]:
            break
        hd[p], hd[c] = hd[c], hd[p]
        hi[p], hi[c] = hi[c], hi[p]
        p = c
    return n


@njit(cache=True, inline="always")
def _heap_push_max(hd, hi, n, d, i):
    hd[n] = d
    hi[n] = i
    c = n
    while c > 0:
        p = (c - 1) >> 1
        if hd[p] >= hd[c]:
            break
        hd[p], hd[c] = hd[c], hd[p]
        hi[p], hi[c] = hi[c], hi[p]
        c = p
    return n + 1


@njit(cache=True, inline="always")
def _heap_pop_max(hd, hi, n):
    n -= 1
    hd[0] = hd[n]
    hi[0] = hi[n]
    p = 0
    while True:
        l = 2 * p + 1
        if l >= n:
            break
        r = l + 1
        c = l
        if r < n and hd[r] > hd[l]:
            c = r
        if hd[p] >= hd[c]:
            break
        hd[p], hd[c] = hd[c], hd[p]
        hi[p], hi[c] = hi[c], hi[p]
        p = c
    return n


@njit(cache=True)
def _search_layer(vecs, adj, deg, entries, q, ef):
    """Beam search on one layer. Returns (dists, ids) of up to ef nearest,
    unsorted (caller sorts by (dist, id))."""
    n = vecs.shape[0]
    visited = np.zeros(n, dtype=np.uint8)
    cand_d = np.empty(n + 1, dtype=np.float64)
    cand_i = np.empty(n + 1, dtype=np.int64)
    bound = min(ef, n) + 2
    res_d = np.empty(bound, dtype=np.float64)
    res_i = np.empty(bound, dtype=np.int64)
    cn = 0
    rn = 0
    for t in range(entries.shape[0]):
        e = entries[t]
        if visited[e]:
            continue
        visited[e] = 1
        d = _dist_to(vecs, e, q)
        cn = _heap_push_min(cand_d, cand_i, cn, d, e)
        rn = _heap_push_max(res_d, res_i, rn, d, e)
        if rn > ef:
            rn = _heap_pop_max(res_d, res_i, rn)
    while cn > 0:
        d = cand_d[0]
        c = cand_i[0]
        cn = _heap_pop_min(cand_d, cand_i, cn)
        if rn >= ef and d > res_d[0]:
            break
        for t in range(deg[c]):
            j = adj[c, t]
            if visited[j]:
                continue
            visited[j] = 1
            dj = _dist_to(vecs, j, q)
            if rn < ef or dj < res_d[0]:
                cn = _heap_push_min(cand_d, cand_i, cn, dj, j)
                rn = _heap_push_max(res_d, res_i, rn, dj, j)
                if rn > ef:
                    rn = _heap_pop_max(res_d, res_i, rn)
    return res_d[:rn].copy(), res_i[:rn].copy()


@njit(cache=True)
def _select_edges(vecs, cand_d, cand_i, m_diverse, cap):
    """Edge selection over (dist asc)-sorted candidates: up to ``m_diverse``
    picks by the closer-to-query-than-to-any-selected rule, then nearest
    fill up to ``cap``. Diverse edges keep the graph navigable; nearest fill
    keeps each node's true neighbors retrievable."""
    nc = cand_d.shape[0]
    if nc <= cap:
        return cand_i.copy(), cand_d.copy()
    sel_i = np.empty(cap, dtype=np.int64)
    sel_d = np.empty(cap, dtype=np.float64)
    taken = np.zeros(nc, dtype=np.uint8)
    ns = 0
    for t in range(nc):
        if ns >= m_diverse:
            break
        c = cand_i[t]
        d = cand_d[t]
        keep = True
        for s in range(ns):
            if _dist_to(vecs, c, vecs[sel_i[s]]) < d:
                keep = False
                break
        if keep:
            sel_i[ns] = c
            sel_d[ns] = d
            taken[t] = 1
            ns += 1
    for t in range(nc):
        if ns >= cap:
            break
        if not taken[t]:
            sel_i[ns] = cand_i[t]
            sel_d[ns] = cand_d[t]
            ns += 1
    return sel_i[:ns].copy(), sel_d[:ns].copy()


@njit(cache=True)
def _select_block(vecs, rows, cand_i, cand_d, m_diverse, cap, adj, adj_d, deg):
    """Apply edge selection to a block of nodes; candidates are per-row
    (dist asc)-sorted internal ids."""
    for r in range(rows.shape[0]):
        node = rows[r]
        sel_i, sel_d = _select_edges(vecs, cand_d[r], cand_i[r], m_diverse, cap)
        k = sel_i.shape[0]
        for t in range(k):
            adj[node, t] = sel_i[t]
            adj_d[node, t] = sel_d[t]
        deg[node] = k


class HnswIndex:
    """Immutable-after-build HNSW graph; concurrent reads need no locks."""

    def __init__(
        self,
        ids: np.ndarray,
        vectors: np.ndarray,
        levels: np.ndarray,
        layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
        entry_point: int,
        params: HnswParams,
    ):
        self.ids = ids  # external ids, ascending; row i of vectors belongs to ids[i]
        self.vectors = vectors  # float32 [n, d], unit rows
        self.levels = levels
        self.layers = layers  # [(adj int32 [n, cap], adj_d f64 [n, cap], deg int32 [n])]
        self.entry_point = entry_point  # internal index, -1 when empty
        self.params = params

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1]) if len(self) else 0

    @property
    def max_level(self) -> int:
        return len(self.layers) - 1

    def search(
        self, query: np.ndarray, k: int, ef_search: int | None = None
    ) -> list[tuple[int, float]]:
        """Top-k by cosine score, descending; ties broken by ascending id."""
        if k < 1:
            raise ContractViolation(f"k must be >= 1, got {k}")
        if len(self) == 0:
            return []
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.shape != (self.dim,):
            raise SchemaError(f"query shape {q.shape} != ({self.dim},)")
        norm = float(np.linalg.norm(q))
        if norm > 0:
            q = q / norm
        q32 = q.astype(np.float32)
        ef = max(ef_search if ef_search is not None else self.params.ef_search, k)

        entries = np.array([self.entry_point], dtype=np.int64)
        for level in range(self.max_level, 0, -1):
            adj, _, deg = self.layers[level]
            _, ids = _search_layer(self.vectors, adj, deg, entries, q32, 1)
            entries = ids
        adj, _, deg = self.layers[0]
        dists, internal = _search_layer(self.vectors, adj, deg, entries, q32, ef)
        ext = self.ids[internal]
        order = np.lexsort((ext, dists))[:k]
        return [(int(ext[i]), 1.0 - float(dists[i])) for i in order]

    def neighbors(self, level: int, internal_id: int) -> np.ndarray:
        adj, _, deg = self.layers[level]
        return adj[internal_id, : deg[internal_id]]


def _empty_index(params: HnswParams) -> HnswIndex:
    return HnswIndex(
        np.zeros(0, dtype=np.int64),
        np.zeros((0, 0), dtype=np.float32),
        np.zeros(0, dtype=np.int32),
        [(np.zeros((0, 0), dtype=np.int32), np.zeros((0, 0), dtype=np.float64), np.zeros(0, dtype=np.int32))],
        -1,
        params,
    )


def _build_layer(
    vecs: np.ndarray,
    members: np.ndarray,
    pool: int,
    m_diverse: int,
    cap: int,
    adj: np.ndarray,
    adj_d: np.ndarray,
    deg: np.ndarray,
) -> None:
    """Wire one layer: per member node, pool exact nearest members by blocked
    matrix products, then run edge selection."""
    m_count = members.shape[0]
    if m_count <= 1:
        return
    member_vecs = vecs[members]
    pool = min(pool, m_count - 1)
    for start in range(0, m_count, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, m_count)
        block = np.arange(start, stop)
        scores = member_vecs[block] @ member_vecs.T  # f32 [B, m_count]
        dists = (1.0 - scores.astype(np.float64)).clip(0.0, 2.0)
        dists[np.arange(len(block)), block] = np.inf  # mask self
        if pool < m_count - 1:
            part = np.argpartition(dists, pool, axis=1)[:, :pool]
        else:
            part = np.argsort(dists, axis=1)[:, :pool]
        part_d = np.take_along_axis(dists, part, axis=1)
        order = np.argsort(part_d, axis=1, kind="stable")
        cand_local = np.take_along_axis(part, order, axis=1)
        cand_d = np.take_along_axis(part_d, order, axis=1)
        cand_i = members[cand_local].astype(np.int64)
        _select_block(
            vecs, members[block].astype(np.int64), cand_i, cand_d, m_diverse, cap, adj, adj_d, deg
        )


def build(vectors: Mapping[int, np.ndarray], params: HnswParams | None = None) -> HnswIndex:
    """Build an index over item_id -> vector. All vectors must share one
    dimension and be normalizable; zero vectors are rejected with their ids."""
    params = params or HnswParams()
    ids = np.array(sorted(vectors), dtype=np.int64)
    n = len(ids)
    if n == 0:
        return _empty_index(params)

    dim = len(np.asarray(vectors[int(ids[0])]).ravel())
    mat = np.empty((n, dim), dtype=np.float64)
    zero_ids: list[int] = []
    for row, ext in enumerate(ids):
        v = np.asarray(vectors[int(ext)], dtype=np.float64).ravel()
        if v.shape != (dim,):
            raise SchemaError(f"vector for id {int(ext)} has dim {v.shape[0]}, expected {dim}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not np.isfinite(norm):
            zero_ids.append(int(ext))
            continue
        mat[row] = v / norm
    if zero_ids:
        raise ZeroVectorError(zero_ids)
    vecs = mat.astype(np.float32)

    rng = np.random.default_rng(params.seed)
    mult = params.level_multiplier
    levels = np.minimum(
        (-np.log(1.0 - rng.random(n)) * mult).astype(np.int64), MAX_LEVEL
    ).astype(np.int32)

    top = int(levels.max())
    layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for level in range(top + 1):
        cap = 2 * params.m if level == 0 else params.m
        layers.append(
            (
                np.zeros((n, cap), dtype=np.int32),
                np.zeros((n, cap), dtype=np.float64),
                np.zeros(n, dtype=np.int32),
            )
        )

    for level in range(top + 1):
        members = np.flatnonzero(levels >= level).astype(np.int64)
        adj, adj_d, deg = layers[level]
        cap = 2 * params.m if level == 0 else params.m
        _build_layer(vecs, members, params.ef_construction, params.m, cap, adj, adj_d, deg)

    entry = int(np.flatnonzero(levels == top)[0])
    index = HnswIndex(ids, vecs, levels, layers, entry, params)
    _reverse_fill(index)
    _repair_reachability(index)
    return index


def _reverse_fill(index: HnswIndex) -> None:
    """Symmetrize the base layer where room allows: if y lists x but x has a
    free slot and does not list y, add the back edge. Cached distances make
    this a pure scan."""
    n = len(index)
    if n < 2:
        return
    adj, adj_d, deg = index.layers[0]
    cap = adj.shape[1]
    fwd = [set(adj[i, : deg[i]].tolist()) for i in range(n)]
    for y in range(n):
        for t in range(deg[y]):
            x = int(adj[y, t])
            if deg[x] < cap and y not in fwd[x]:
                adj[x, deg[x]] = y
                adj_d[x, deg[x]] = adj_d[y, t]
                deg[x] += 1
                fwd[x].add(y)


def _reachable_from_entry(index: HnswIndex) -> np.ndarray:
    n = len(index)
    seen = np.zeros(n, dtype=bool)
    if n == 0 or index.entry_point < 0:
        return seen
    adj, _, deg = index.layers[0]
    stack = [index.entry_point]
    seen[index.entry_point] = True
    while stack:
        c = stack.pop()
        for j in adj[c, : deg[c]]:
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return seen


def _repair_reachability(index: HnswIndex, max_rounds: int = 10) -> int:
    """Ensure every node is reachable from the entry point on layer 0, so an
    exhaustive-ef search is a true full scan. Mutual-kNN islands are possible
    in principle; on real embedding data this never fires."""
    repairs = 0
    adj, adj_d, deg = index.layers[0]
    cap = adj.shape[1]
    for _ in range(max_rounds):
        seen = _reachable_from_entry(index)
        missing = np.flatnonzero(~seen)
        if missing.size == 0:
            return repairs
        reached = np.flatnonzero(seen)
        for x in missing:
            sims = index.vectors[reached].astype(np.float64) @ index.vectors[x].astype(np.float64)
            pos = int(np.argmax(sims))
            y = int(reached[pos])
            d = max(0.0, 1.0 - float(sims[pos]))
            if deg[y] >= cap:
                drop = int(np.argmax(adj_d[y, : deg[y]]))
                adj[y, drop] = adj[y, deg[y] - 1]
                adj_d[y, drop] = adj_d[y, deg[y] - 1]
                deg[y] -= 1
            adj[y, deg[y]] = x
            adj_d[y, deg[y]] = d
            deg[y] += 1
            repairs += 1
    if np.any(~_reachable_from_entry(index)):
        raise RuntimeError("could not repair layer-0 reachability")
    return repairs


def validate(index: HnswIndex) -> list[str]:
    """Walk the index and report every violated structural invariant."""
    violations: list[str] = []
    n = len(index)
    if n == 0:
        return violations
    norms = np.linalg.norm(index.vectors.astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
    if bad.size:
        violations.append(f"{bad.size} stored vectors not unit-norm within 1e-6")
    if not (0 <= index.entry_point < n):
        violations.append(f"entry point {index.entry_point} out of range")
    elif index.levels[index.entry_point] != index.max_level:
        violations.append("entry point does not live on the top layer")
    for level, (adj, _, deg) in enumerate(index.layers):
        cap = 2 * index.params.m if level == 0 else index.params.m
        if int(deg.max(initial=0)) > cap:
            violations.append(f"layer {level}: degree exceeds {cap}")
        members = np.flatnonzero(index.levels >= level)
        member_set = set(members.tolist())
        for node in members:
            for nb in adj[node, : deg[node]]:
                if int(nb) not in member_set:
                    violations.append(
                        f"layer {level}: edge {node}->{int(nb)} leaves the layer node set"
                    )
                    break
        nonmembers = np.flatnonzero(index.levels < level)
        if np.any(deg[nonmembers] > 0):
            violations.append(f"layer {level}: node outside layer has edges")
    if np.any(~_reachable_from_entry(index)):
        violations.append("layer 0 not fully reachable from the entry point")
    return violations


def edge_count(index: HnswIndex) -> int:
    return int(sum(int(deg.sum()) for _, _, deg in index.layers))


# ---------------------------------------------------------------------------
# Snapshot format: header ITOOHNSW, version, params, then ids/levels/vectors
# and ragged per-layer adjacency with cached edge distances.
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"ITOOHNSW"
SNAPSHOT_VERSION = 1
_SNAP_HEADER = struct.Struct("<8sIIQIIIqdqi")


def save_index(index: HnswIndex, path: str | Path) -> None:
    p = index.params
    with open(path, "wb") as f:
        f.write(
            _SNAP_HEADER.pack(
                SNAPSHOT_MAGIC,
                SNAPSHOT_VERSION,
                index.dim,
                len(index),
                p.m,
                p.ef_construction,
                p.ef_search,
                p.seed,
                p.level_multiplier,
                index.entry_point,
                index.max_level,
            )
        )
        if len(index) == 0:
            return
        f.write(index.ids.astype("<i8").tobytes())
        f.write(index.levels.astype("<i4").tobytes())
        f.write(index.vectors.astype("<f4").tobytes())
        for adj, adj_d, deg in index.layers:
            members = np.flatnonzero(deg > 0)
            f.write(struct.pack("<q", len(members)))
            for node in members:
                d = int(deg[node])
                f.write(struct.pack("<ii", int(node), d))
                f.write(adj[node, :d].astype("<i4").tobytes())
                f.write(adj_d[node, :d].astype("<f8").tobytes())


def load_index(path: str | Path) -> HnswIndex:
    with open(path, "rb") as f:
        header = f.read(_SNAP_HEADER.size)
        if len(header) < _SNAP_HEADER.size:
            raise ParseError("truncated snapshot header", path=str(path))
        (magic, version, dim, n, m, ef_c, ef_s, seed, _mult, entry, max_level) = _SNAP_HEADER.unpack(header)
        if magic != SNAPSHOT_MAGIC:
            raise ParseError(f"bad magic {magic!r}", path=str(path))
        if version != SNAPSHOT_VERSION:
            raise SchemaError(f"unsupported snapshot version {version} in {path}")
        params = HnswParams(m=m, ef_construction=ef_c, ef_search=ef_s, seed=seed)
        if n == 0:
            return _empty_index(params)

        def read_exact(count: int) -> bytes:
            buf = f.read(count)
            if len(buf) < count:
                raise ParseError("truncated snapshot body", path=str(path))
            return buf

        ids = np.frombuffer(read_exact(8 * n), dtype="<i8").astype(np.int64)
        levels = np.frombuffer(read_exact(4 * n), dtype="<i4").astype(np.int32)
        vectors = np.frombuffer(read_exact(4 * n * dim), dtype="<f4").reshape(n, dim).astype(np.float32)
        layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        for level in range(max_level + 1):
            cap = 2 * m if level == 0 else m
            adj = np.zeros((n, cap), dtype=np.int32)
            adj_d = np.zeros((n, cap), dtype=np.float64)
            deg = np.zeros(n, dtype=np.int32)
            (count,) = struct.unpack("<q", read_exact(8))
            for _ in range(count):
                node, d = struct.unpack("<ii", read_exact(8))
                if d > cap or node < 0 or node >= n:
                    raise SchemaError(f"snapshot {path}: bad adjacency row ({node}, {d})")
                if d:
                    adj[node, :d] = np.frombuffer(read_exact(4 * d), dtype="<i4")
                    adj_d[node, :d] = np.frombuffer(read_exact(8 * d), dtype="<f8")
                deg[node] = d
            layers.append((adj, adj_d, deg))
    index = HnswIndex(ids, vectors, levels, layers, entry, params)
    problems = validate(index)
    if problems:
        raise SchemaError(f"snapshot {path} violates index invariants: {problems}")
    return index
