"""Hybrid CF-CBF recommendation, curated-feed mixing, and style-leader
suggestion over an immutable snapshot of profiles and style vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import EngineConfig
from .errors import ContractViolation
from .records import InteractionEvent, OotdPost, UserProfile
from .similarity import cosine_similarity
from .style import semantic_ootd_similarity, semantic_user_similarity
from .tfidf import TfidfProfile, decay_factor, whole_days_since


@dataclass(frozen=True)
class ScoredId:
    id: str
    score: float
    source: str


@dataclass(frozen=True)
class Recommendations:
    entries: tuple[ScoredId, ...]
    cold_start: bool = False


@dataclass
class RecSnapshot:
    """Everything a recommendation read needs, frozen at build time."""

    config: EngineConfig
    now: datetime
    users: dict[str, UserProfile]
    ootds: dict[str, OotdPost]
    ootd_styles: dict[str, np.ndarray]
    user_styles: dict[str, np.ndarray | None]
    upload_styles: dict[str, np.ndarray | None]  # per-user style of recent uploads
    user_profiles: dict[str, TfidfProfile]
    item_profiles: dict[str, TfidfProfile]
    seen: dict[str, set[str]]  # user -> interacted OOTD ids (view/like/upload)
    events: list[InteractionEvent] = field(default_factory=list)
    version: int = 0
    idf: dict[str, float] = field(default_factory=dict)  # target -> idf at build time
    doc_count: int = 0

    def profile_of(self, user_id: str) -> TfidfProfile:
        return self.user_profiles.get(user_id, TfidfProfile())


def cfcbf_user_similarity(snapshot: RecSnapshot, u1: str, u2: str) -> float:
    """lambda_cf * shrunk TF-IDF cosine + (1 - lambda_cf) * semantic user
    similarity."""
    cfg = snapshot.config
    cf = snapshot.profile_of(u1).cosine_shrunk(snapshot.profile_of(u2), cfg.shrinkage)
    p1 = snapshot.users.get(u1)
    p2 = snapshot.users.get(u2)
    cbf = semantic_user_similarity(
        snapshot.user_styles.get(u1),
        snapshot.user_styles.get(u2),
        p1.preference_tags if p1 else (),
        p2.preference_tags if p2 else (),
        cfg.lambda_user,
    )
    return cfg.lambda_cf * cf + (1.0 - cfg.lambda_cf) * cbf


def cfcbf_item_similarity(snapshot: RecSnapshot, o1: str, o2: str) -> float:
    """Item-side CF-CBF: transposed TF-IDF cosine blended with the semantic
    OOTD similarity."""
    cfg = snapshot.config
    cf = (
        snapshot.item_profiles.get(o1, TfidfProfile()).cosine_shrunk(
            snapshot.item_profiles.get(o2, TfidfProfile()), cfg.shrinkage
        )
    )
    s1 = snapshot.ootd_styles.get(o1)
    s2 = snapshot.ootd_styles.get(o2)
    p1 = snapshot.ootds.get(o1)
    p2 = snapshot.ootds.get(o2)
    if s1 is None or s2 is None or p1 is None or p2 is None:
        cbf = 0.0
    else:
        cbf = semantic_ootd_similarity(s1, s2, p1.hashtags, p2.hashtags, cfg.lambda_ootd)
    return cfg.lambda_cf * cf + (1.0 - cfg.lambda_cf) * cbf


def _ranked(scores: dict[str, float], k: int, source: str) -> list[ScoredId]:
    order = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [ScoredId(i, s, source) for i, s in order[:k]]


def recommend_user_based(snapshot: RecSnapshot, user_id: str, k: int) -> Recommendations:
    """Score candidate OOTDs by sum over neighbor users of
    similarity(user, neighbor) * neighbor's decayed profile weight."""
    profile = snapshot.profile_of(user_id)
    if not profile and snapshot.user_styles.get(user_id) is None:
        return Recommendations((), cold_start=True)
    sims = {
        other: cfcbf_user_similarity(snapshot, user_id, other)
        for other in snapshot.users
        if other != user_id
    }
    neighbors = sorted(sims.items(), key=lambda kv: (-kv[1], kv[0]))
    neighbors = [(u, s) for u, s in neighbors[: snapshot.config.neighbor_count] if s > 0]
    if not neighbors:
        return Recommendations((), cold_start=not bool(profile))
    exclude = snapshot.seen.get(user_id, set())
    scores: dict[str, float] = {}
    for nb, sim in neighbors:
        for ootd_id, weight in snapshot.profile_of(nb).weights.items():
            if ootd_id in exclude:
                continue
            scores[ootd_id] = scores.get(ootd_id, 0.0) + sim * weight
    return Recommendations(tuple(_ranked(scores, k, "cf")))


def recommend_item_based(snapshot: RecSnapshot, user_id: str, k: int) -> Recommendations:
    """Score candidates by similarity to the OOTDs the user recently viewed
    or liked, weighted by the user's own decayed profile weights."""
    profile = snapshot.profile_of(user_id)
    if not profile:
        return Recommendations((), cold_start=True)
    exclude = snapshot.seen.get(user_id, set())
    seeds = sorted(profile.weights.items(), key=lambda kv: (-kv[1], kv[0]))
    scores: dict[str, float] = {}
    for candidate in snapshot.ootds:
        if candidate in exclude:
            continue
        total = 0.0
        for seed, weight in seeds:
            total += cfcbf_item_similarity(snapshot, seed, candidate) * weight
        if total > 0:
            scores[candidate] = total
    return Recommendations(tuple(_ranked(scores, k, "cf")))


def _interleave_even(lists: Sequence[Sequence[ScoredId]]) -> list[ScoredId]:
    out: list[ScoredId] = []
    seen: set[str] = set()
    for round_idx in range(max((len(ls) for ls in lists), default=0)):
        for ls in lists:
            if round_idx < len(ls) and ls[round_idx].id not in seen:
                seen.add(ls[round_idx].id)
                out.append(ls[round_idx])
    return out


def cfcbf_recommend(snapshot: RecSnapshot, user_id: str, k: int) -> Recommendations:
    """User-based and item-based lists interleaved 50/50, deduplicated."""
    ub = recommend_user_based(snapshot, user_id, k)
    ib = recommend_item_based(snapshot, user_id, k)
    merged = _interleave_even([ub.entries, ib.entries])[:k]
    return Recommendations(tuple(merged), cold_start=ub.cold_start and ib.cold_start)


def quota_interleave(
    sources: Sequence[tuple[Sequence[ScoredId], float]], k: int
) -> list[ScoredId]:
    """Weighted interleave: drop empty sources, renormalize ratios, assign
    quotas by largest remainder, then round-robin one item per source per
    round while quota remains; duplicates keep their earliest slot; leftover
    capacity is backfilled round-robin."""
    live = [(list(entries), ratio) for entries, ratio in sources if entries and ratio > 0]
    if not live or k < 1:
        return []
    total_ratio = sum(r for _, r in live)
    shares = [r / total_ratio * k for _, r in live]
    quotas = [int(s) for s in shares]
    remainders = sorted(
        range(len(live)), key=lambda i: (-(shares[i] - quotas[i]), i)
    )
    for i in remainders:
        if sum(quotas) >= k:
            break
        quotas[i] += 1

    queues = [list(entries) for entries, _ in live]
    out: list[ScoredId] = []
    placed: set[str] = set()
    active = True
    while active and len(out) < k:
        active = False
        for i, queue in enumerate(queues):
            if quotas[i] <= 0 or len(out) >= k:
                continue
            while queue:
                entry = queue.pop(0)
                if entry.id in placed:
                    continue
                out.append(entry)
                placed.add(entry.id)
                quotas[i] -= 1
                active = True
                break
    # backfill remaining capacity from whatever is left, round-robin
    progressing = True
    while len(out) < k and progressing:
        progressing = False
        for queue in queues:
            while queue and len(out) < k:
                entry = queue.pop(0)
                if entry.id in placed:
                    continue
                out.append(entry)
                placed.add(entry.id)
                progressing = True
                break
    return out


def weekly_best(
    events: Iterable[InteractionEvent],
    ootds: Mapping[str, OotdPost],
    now: datetime,
    beta: float,
    k: int,
    window_days: int = 7,
    kinds: tuple[str, ...] = ("like",),
    source: str = "weekly",
    user_filter: set[str] | None = None,
) -> list[ScoredId]:
    """OOTDs ranked by decayed interaction count over the trailing window."""
    scores: dict[str, float] = {}
    for e in events:
        if e.kind not in kinds or e.target_id not in ootds:
            continue
        if user_filter is not None and e.user_id not in user_filter:
            continue
        d = whole_days_since(e.timestamp, now)
        if d >= window_days:
            continue
        scores[e.target_id] = scores.get(e.target_id, 0.0) + decay_factor(beta, d)
    return _ranked(scores, k, source)


def segment_best(snapshot: RecSnapshot, user_id: str, k: int) -> list[ScoredId]:
    """Best OOTDs among users sharing the demographic segment (gender,
    decade age bucket); falls back to views when the segment has no likes."""
    me = snapshot.users.get(user_id)
    if me is None:
        return []
    segment = {
        uid
        for uid, profile in snapshot.users.items()
        if profile.segment_key() == me.segment_key()
    }
    liked = weekly_best(
        snapshot.events, snapshot.ootds, snapshot.now, snapshot.config.decay_beta, k,
        snapshot.config.weekly_window_days, ("like",), "segment", segment,
    )
    if liked:
        return liked
    return weekly_best(
        snapshot.events, snapshot.ootds, snapshot.now, snapshot.config.decay_beta, k,
        snapshot.config.weekly_window_days, ("view",), "segment", segment,
    )


def is_stale(snapshot: RecSnapshot, user_id: str) -> bool:
    """True when every decayed CF weight of the user sits below the
    staleness floor: long-inactive users get global taste, not personalization."""
    return snapshot.profile_of(user_id).max_weight() < snapshot.config.eps_decay


def curate_feed(snapshot: RecSnapshot, user_id: str, k: int) -> list[ScoredId]:
    """The home feed: CF-CBF, weekly best, and segment best interleaved at
    the configured ratios. Stale or cold users fall back to the weekly and
    segment mixture alone."""
    cfg = snapshot.config
    if is_stale(snapshot, user_id):
        cf_entries: tuple[ScoredId, ...] = ()
    else:
        cf_entries = cfcbf_recommend(snapshot, user_id, k).entries
    weekly = weekly_best(
        snapshot.events, snapshot.ootds, snapshot.now, cfg.decay_beta, k,
        cfg.weekly_window_days,
    )
    if not weekly:
        weekly = weekly_best(
            snapshot.events, snapshot.ootds, snapshot.now, cfg.decay_beta, k,
            cfg.weekly_window_days, ("view",),
        )
    segment = segment_best(snapshot, user_id, k)
    feed = quota_interleave(
        [(cf_entries, cfg.mix_cfcbf), (weekly, cfg.mix_weekly), (segment, cfg.mix_segment)], k
    )
    if len(feed) < k:
        # last-resort fill: newest OOTDs (the weekly-best of an interaction-
        # less system), so the feed is nonempty whenever any OOTD exists
        placed = {e.id for e in feed}
        newest = sorted(
            snapshot.ootds.values(), key=lambda o: (o.created_at, o.ootd_id), reverse=True
        )
        for ootd in newest:
            if len(feed) >= k:
                break
            if ootd.ootd_id not in placed:
                feed.append(ScoredId(ootd.ootd_id, 0.0, "weekly"))
                placed.add(ootd.ootd_id)
    return feed


def similar_ootds(snapshot: RecSnapshot, ootd_id: str, k: int) -> list[ScoredId]:
    """Similar-style OOTD ranking by the semantic OOTD similarity."""
    if ootd_id not in snapshot.ootds or ootd_id not in snapshot.ootd_styles:
        raise ContractViolation(f"unknown OOTD {ootd_id!r}")
    base = snapshot.ootds[ootd_id]
    base_style = snapshot.ootd_styles[ootd_id]
    scores = {
        other: semantic_ootd_similarity(
            base_style,
            snapshot.ootd_styles[other],
            base.hashtags,
            snapshot.ootds[other].hashtags,
            snapshot.config.lambda_ootd,
        )
        for other in snapshot.ootds
        if other != ootd_id and other in snapshot.ootd_styles
    }
    return _ranked(scores, k, "style")


# ---------------------------------------------------------------------------
# Style-leader suggestion
# ---------------------------------------------------------------------------


def follow_graph(users: Mapping[str, UserProfile]) -> dict[str, set[str]]:
    return {uid: set(profile.follows) for uid, profile in users.items()}


def _walk_targets(graph: Mapping[str, set[str]], reverse: Mapping[str, set[str]], node: str) -> list[str]:
    """Out-edges; a sink falls back to its in-edges."""
    out = graph.get(node, set())
    if out:
        return sorted(out)
    return sorted(reverse.get(node, set()))


def reverse_graph(graph: Mapping[str, set[str]]) -> dict[str, set[str]]:
    rev: dict[str, set[str]] = {}
    for src, dsts in graph.items():
        for dst in dsts:
            rev.setdefault(dst, set()).add(src)
    return rev


def random_walk_candidates(
    graph: Mapping[str, set[str]],
    start: str,
    walks: int,
    rng: np.random.Generator,
) -> dict[str, int]:
    """Endpoints of two-step uniform random walks over follow edges,
    aggregated over ``walks`` walks: candidate -> hit count. The walker
    steps along out-edges, falling back to in-edges at sinks."""
    rev = reverse_graph(graph)
    counts: dict[str, int] = {}
    for _ in range(walks):
        first_hops = _walk_targets(graph, rev, start)
        if not first_hops:
            break
        mid = first_hops[int(rng.integers(len(first_hops)))]
        second_hops = _walk_targets(graph, rev, mid)
        if not second_hops:
            continue
        end = second_hops[int(rng.integers(len(second_hops)))]
        if end != start:
            counts[end] = counts.get(end, 0) + 1
    return counts


def suggest_style_leaders(snapshot: RecSnapshot, user_id: str, k: int) -> list[ScoredId]:
    """Who-to-follow: latent (style match between the user's view/like
    history and candidates' upload history), graph (two-step random walks),
    segment peers, and globally popular users, quota-interleaved; the user
    and everyone they already follow are excluded."""
    cfg = snapshot.config
    me = snapshot.users.get(user_id)
    followed = set(me.follows) if me else set()
    excluded = followed | {user_id}

    def admissible(uid: str) -> bool:
        return uid not in excluded

    # latent
    latent: list[ScoredId] = []
    my_style = snapshot.user_styles.get(user_id)
    if my_style is not None:
        scores = {
            uid: cosine_similarity(my_style, upload_style)
            for uid, upload_style in snapshot.upload_styles.items()
            if admissible(uid) and upload_style is not None
        }
        latent = _ranked(scores, k, "latent")

    # graph: frequency-ranked random-walk endpoints
    graph = follow_graph(snapshot.users)
    rng = np.random.default_rng(cfg.walk_seed)
    counts = random_walk_candidates(graph, user_id, cfg.walk_count, rng)
    graph_entries = _ranked(
        {uid: float(c) for uid, c in counts.items() if admissible(uid)}, k, "graph"
    )

    follower_counts: dict[str, int] = {uid: 0 for uid in snapshot.users}
    for uid, profile in snapshot.users.items():
        for followee in profile.follows:
            if followee in follower_counts:
                follower_counts[followee] += 1

    segment_entries: list[ScoredId] = []
    if me is not None:
        segment_scores = {
            uid: float(follower_counts[uid])
            for uid, profile in snapshot.users.items()
            if admissible(uid) and profile.segment_key() == me.segment_key()
        }
        segment_entries = _ranked(segment_scores, k, "segment")

    popular_entries = _ranked(
        {uid: float(c) for uid, c in follower_counts.items() if admissible(uid)}, k, "popular"
    )

    return quota_interleave(
        [
            (latent, cfg.leader_mix_latent),
            (graph_entries, cfg.leader_mix_graph),
            (segment_entries, cfg.leader_mix_segment),
            (popular_entries, cfg.leader_mix_popular),
        ],
        k,
    )


def build_snapshot(
    config: EngineConfig,
    now: datetime,
    users: Mapping[str, UserProfile],
    ootds: Mapping[str, OotdPost],
    ootd_styles: Mapping[str, np.ndarray],
    events: Sequence[InteractionEvent],
    version: int = 0,
) -> RecSnapshot:
    """Assemble the immutable read model: per-user histories, style vectors,
    and both TF-IDF profile tables."""
    from .style import user_style_vector
    from .tfidf import build_item_profiles, build_tfidf_profiles, compute_idf
    from .errors import ColdStartError

    history: dict[str, list[str]] = {}
    uploads: dict[str, list[str]] = {}
    seen: dict[str, set[str]] = {}
    for e in sorted(events, key=lambda e: e.timestamp, reverse=True):
        if e.kind in ("view", "like"):
            history.setdefault(e.user_id, []).append(e.target_id)
            seen.setdefault(e.user_id, set()).add(e.target_id)
        elif e.kind == "upload":
            uploads.setdefault(e.user_id, []).append(e.target_id)
            seen.setdefault(e.user_id, set()).add(e.target_id)

    user_styles: dict[str, np.ndarray | None] = {}
    upload_styles: dict[str, np.ndarray | None] = {}
    for uid in users:
        try:
            user_styles[uid] = user_style_vector(
                history.get(uid, []), ootd_styles, config.history_window, config.recency_alpha
            )
        except ColdStartError:
            user_styles[uid] = None
        try:
            upload_styles[uid] = user_style_vector(
                uploads.get(uid, []), ootd_styles, config.history_window, config.recency_alpha
            )
        except ColdStartError:
            upload_styles[uid] = None

    idf, doc_count = compute_idf(events)
    return RecSnapshot(
        config=config,
        now=now,
        users=dict(users),
        ootds=dict(ootds),
        ootd_styles=dict(ootd_styles),
        user_styles=user_styles,
        upload_styles=upload_styles,
        user_profiles=build_tfidf_profiles(events, now, config.decay_beta),
        item_profiles=build_item_profiles(events, now, config.decay_beta),
        seen=seen,
        events=list(events),
        version=version,
        idf=idf,
        doc_count=doc_count,
    )
