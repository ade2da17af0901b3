"""Engine state: the item/OOTD/user stores, the append-only interaction log,
the per-super-category index catalog, and the recommender snapshot.

Readers always work against one immutable snapshot reference; mutations are
serialized under a lock, appended durably to disk before acknowledgment,
and then swapped in as a fresh snapshot (rebuilds replace everything, live
interactions overlay only the acting user's profile and history).

Determinism: the snapshot clock is derived from the data (newest event or
post timestamp), so reloading the same files reproduces identical outputs.
"""

from __future__ import annotations

import json
import threading
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import dataio, hnsw, recommend, sharding
from .config import EngineConfig
from .errors import ColdStartError, ContractViolation, UnknownEntityError
from .imaging import RasterImage
from .pipeline import OotdAnalysis, PluginSet, StubCatalog, run_ootd_pipeline, stub_plugins, _pixel_stats
from .records import EmbeddingBlock, InteractionEvent, ItemRecord, OotdPost, UserProfile
from .recommend import RecSnapshot, ScoredId, build_snapshot
from .style import item_style_vectors, ootd_style_vector, sub_category_means
from .taxonomy import CategoryHierarchy, default_hierarchy, load_hierarchy
from .tfidf import TfidfProfile, decayed_tf, default_idf

_EPOCH = datetime(2020, 1, 1, tzinfo=timezone.utc)


class Engine:
    """Single-node engine over in-memory stores with file persistence."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        data_dir: str | Path | None = None,
        hierarchy: CategoryHierarchy | None = None,
        plugins: PluginSet | None = None,
        stub_catalog: StubCatalog | None = None,
    ):
        self.config = config or EngineConfig()
        if hierarchy is not None:
            self.hierarchy = hierarchy
        elif self.config.hierarchy_path:
            self.hierarchy = load_hierarchy(self.config.hierarchy_path)
        else:
            self.hierarchy = default_hierarchy()
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)

        self.items: dict[int, ItemRecord] = {}
        self.ootds: dict[str, OotdPost] = {}
        self.users: dict[str, UserProfile] = {}
        self.events: list[InteractionEvent] = []

        self.stub_catalog = stub_catalog or StubCatalog()
        self.plugins = plugins or stub_plugins(
            self.config.hnsw_seed, self.hierarchy, self.stub_catalog, self.config.dim_search
        )
        rng = np.random.default_rng(self.config.hnsw_seed + 1)
        self._rep_projections = (
            rng.normal(size=(self.config.dim_classifier, 96)),
            rng.normal(size=(self.config.dim_tagger, 96)),
        )

        self.catalog = sharding.IndexCatalog()
        self.snapshot: RecSnapshot | None = None
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def _path(self, name: str) -> Path:
        if self.data_dir is None:
            raise ContractViolation("engine has no data directory configured")
        return self.data_dir / name

    @classmethod
    def open(
        cls,
        data_dir: str | Path,
        config: EngineConfig | None = None,
        plugins: PluginSet | None = None,
        stub_catalog: StubCatalog | None = None,
    ) -> "Engine":
        """Load persisted stores and rebuild the read model. Index snapshots
        on disk are reused; otherwise indexes are rebuilt from vectors."""
        engine = cls(config, data_dir, plugins=plugins, stub_catalog=stub_catalog)
        d = engine.data_dir
        if (d / "items.jsonl").exists():
            for item in dataio.load_jsonl(d / "items.jsonl", _item_from_json):
                engine.items[item.item_id] = item
        if (d / "ootds.jsonl").exists():
            for ootd in dataio.load_ootds(d / "ootds.jsonl"):
                engine.ootds[ootd.ootd_id] = ootd
        if (d / "users.jsonl").exists():
            for user in dataio.load_users(d / "users.jsonl"):
                engine.users[user.user_id] = user
        if (d / "interactions.csv").exists():
            engine.events = dataio.load_interactions(d / "interactions.csv")
        index_dir = d / "indexes"
        if index_dir.exists() and any(index_dir.glob("*.hnsw")):
            engine._load_catalog(index_dir)
            engine._swap_snapshot()
        else:
            engine.rebuild()
        return engine

    def flush(self) -> None:
        """Rewrite the full stores (the log and JSONL files are also appended
        incrementally on every mutation)."""
        if self.data_dir is None:
            return
        dataio.save_jsonl(self._path("items.jsonl"), self.items.values(), _item_to_json)
        dataio.save_jsonl(self._path("ootds.jsonl"), self.ootds.values(), dataio.ootd_to_json)
        dataio.save_jsonl(self._path("users.jsonl"), self.users.values(), dataio.user_to_json)
        dataio.save_interactions(self._path("interactions.csv"), self.events)

    def _save_catalog(self) -> None:
        if self.data_dir is None:
            return
        index_dir = self._path("indexes")
        index_dir.mkdir(exist_ok=True)
        for old in index_dir.glob("*.hnsw"):
            old.unlink()
        for sup, sharded in self.catalog.indexes.items():
            for i, shard in enumerate(sharded.shards):
                hnsw.save_index(shard, index_dir / f"{sup}.shard{i}.hnsw")

    def _load_catalog(self, index_dir: Path) -> None:
        indexes: dict[str, sharding.ShardedIndex] = {}
        by_super: dict[str, dict[int, hnsw.HnswIndex]] = {}
        for path in sorted(index_dir.glob("*.hnsw")):
            sup, shard_part, _ = path.name.rsplit(".", 2)
            by_super.setdefault(sup, {})[int(shard_part.removeprefix("shard"))] = hnsw.load_index(path)
        for sup, shards in by_super.items():
            indexes[sup] = sharding.ShardedIndex(tuple(shards[i] for i in sorted(shards)))
        self.catalog = sharding.IndexCatalog(indexes=indexes, version=self.catalog.version + 1)

    # ------------------------------------------------------------------
    # clock
    # ------------------------------------------------------------------

    def data_now(self) -> datetime:
        """Deterministic snapshot clock: the newest timestamp in the data."""
        stamps = [e.timestamp for e in self.events] + [o.created_at for o in self.ootds.values()]
        return max(stamps) if stamps else _EPOCH

    # ------------------------------------------------------------------
    # mutations (serialized; durable before acknowledgment)
    # ------------------------------------------------------------------

    def add_item(self, item: ItemRecord) -> None:
        with self._lock:
            item.validate(self.hierarchy, self.config.dim_search)
            self.items[item.item_id] = item
            if self.data_dir is not None:
                dataio.append_jsonl(self._path("items.jsonl"), item, _item_to_json)

    def add_user(self, user: UserProfile) -> None:
        with self._lock:
            self.users[user.user_id] = user
            if self.data_dir is not None:
                dataio.append_jsonl(self._path("users.jsonl"), user, dataio.user_to_json)

    def next_item_id(self) -> int:
        return max(self.items, default=0) + 1

    def _rep_vectors(self, crop: RasterImage) -> tuple[np.ndarray, np.ndarray]:
        feats = _pixel_stats(crop)
        f_c = self._rep_projections[0] @ feats
        f_a = self._rep_projections[1] @ feats
        return f_c, f_a

    def upload_ootd(
        self,
        uploader_id: str,
        image: RasterImage,
        hashtags: Sequence[str] = (),
        ootd_id: str | None = None,
        created_at: datetime | None = None,
    ) -> tuple[OotdPost, OotdAnalysis]:
        """Run the inference pipeline on an uploaded photo, store the crops
        as items, and record the upload event."""
        with self._lock:
            if uploader_id not in self.users:
                raise UnknownEntityError(f"unknown user {uploader_id!r}")
            analysis = run_ootd_pipeline(
                image, self.plugins, self.hierarchy, self.config.iou_threshold, self.config.workers
            )
            item_ids: list[int] = []
            for crop in analysis.crops:
                if crop.vector is None:
                    continue
                item_id = self.next_item_id()
                crop_img = image.crop(crop.box.x, crop.box.y, crop.box.w, crop.box.h)
                f_c, f_a = self._rep_vectors(crop_img)
                color = next((v for g, v in crop.tags if g == "color"), None)
                record = ItemRecord(
                    item_id=item_id,
                    sub_category=crop.sub_category,
                    color_tag=color,
                    attribute_tags=frozenset(crop.tags),
                    embeddings=EmbeddingBlock(f_c, f_a, crop.vector),
                )
                self.add_item(record)
                item_ids.append(item_id)
            if not item_ids:
                raise ContractViolation("pipeline produced no embeddable crops")
            if ootd_id is None:
                ootd_id = f"o{len(self.ootds) + 1}"
            if ootd_id in self.ootds:
                raise ContractViolation(f"OOTD id {ootd_id!r} already exists")
            created = created_at or self.data_now()
            post = OotdPost(ootd_id, uploader_id, tuple(item_ids), frozenset(hashtags), created)
            self.ootds[ootd_id] = post
            if self.data_dir is not None:
                dataio.append_jsonl(self._path("ootds.jsonl"), post, dataio.ootd_to_json)
            self._append_event(InteractionEvent(created, uploader_id, "upload", ootd_id))
            return post, analysis

    def record_interaction(self, user_id: str, kind: str, target_id: str,
                           timestamp: datetime | None = None) -> InteractionEvent:
        """Append one view/like/follow event; immediately visible to
        recommendation reads through the live overlay."""
        with self._lock:
            if user_id not in self.users:
                raise UnknownEntityError(f"unknown user {user_id!r}")
            if kind in ("view", "like", "upload"):
                if target_id not in self.ootds:
                    raise UnknownEntityError(f"unknown OOTD {target_id!r}")
            elif kind == "follow":
                if target_id not in self.users:
                    raise UnknownEntityError(f"unknown user {target_id!r}")
            else:
                raise ContractViolation(f"unknown interaction kind {kind!r}")
            ts = timestamp or self.data_now()
            event = InteractionEvent(ts, user_id, kind, target_id)
            if kind == "follow":
                me = self.users[user_id]
                if target_id != user_id:
                    self.users[user_id] = replace(me, follows=me.follows | {target_id})
                    if self.data_dir is not None:
                        dataio.save_jsonl(
                            self._path("users.jsonl"), self.users.values(), dataio.user_to_json
                        )
            self._append_event(event)
            return event

    def _append_event(self, event: InteractionEvent) -> None:
        if self.data_dir is not None:
            dataio.append_interaction(self._path("interactions.csv"), event)
        self.events.append(event)
        self._overlay(event)

    # ------------------------------------------------------------------
    # snapshot lifecycle
    # ------------------------------------------------------------------

    def rebuild(self) -> None:
        """Nightly-style rebuild: fresh per-super-category indexes built off
        to the side and swapped atomically, then a fresh recommender
        snapshot. A failed index build leaves the old catalog live."""
        with self._lock:
            vectors_by_super: dict[str, dict[int, np.ndarray]] = {}
            for item in self.items.values():
                if item.embeddings is None:
                    continue
                sup = self.hierarchy.super_of(item.sub_category)
                vectors_by_super.setdefault(sup, {})[item.item_id] = np.asarray(
                    item.embeddings.f_search, dtype=np.float64
                )
            params = hnsw.HnswParams(
                m=self.config.hnsw_m,
                ef_construction=self.config.hnsw_ef_construction,
                ef_search=self.config.hnsw_ef_search,
                seed=self.config.hnsw_seed,
            )
            self.catalog = sharding.rebuild_catalog(
                self.catalog, vectors_by_super, params, self.config.shard_count
            )
            self._save_catalog()
            self.flush()
            self._swap_snapshot()

    def _swap_snapshot(self) -> None:
        version = (self.snapshot.version + 1) if self.snapshot else 1
        means = sub_category_means(self.items.values())
        item_styles = item_style_vectors(self.items.values(), means)
        ootd_styles = {
            o.ootd_id: ootd_style_vector(o, item_styles)
            for o in self.ootds.values()
            if all(i in item_styles for i in o.item_ids)
        }
        self.snapshot = build_snapshot(
            self.config, self.data_now(), self.users, self.ootds, ootd_styles,
            self.events, version,
        )
        self._save_snapshot_artifacts(means)

    def _save_snapshot_artifacts(self, means: dict, keep: int = 3) -> None:
        """Persist the recommender read model (profiles, means, style
        vectors) as one versioned JSON file per swap; older versions are
        pruned."""
        if self.data_dir is None or self.snapshot is None:
            return
        snap_dir = self._path("snapshots")
        snap_dir.mkdir(exist_ok=True)
        snap = self.snapshot
        payload = {
            "version": snap.version,
            "now": snap.now.isoformat(),
            "sub_category_means": {k: v.tolist() for k, v in means.items()},
            "ootd_styles": {k: v.tolist() for k, v in snap.ootd_styles.items()},
            "user_styles": {
                k: (v.tolist() if v is not None else None) for k, v in snap.user_styles.items()
            },
            "user_profiles": {u: p.weights for u, p in snap.user_profiles.items()},
            "item_profiles": {o: p.weights for o, p in snap.item_profiles.items()},
        }
        (snap_dir / f"snapshot-v{snap.version}.json").write_text(
            json.dumps(payload, sort_keys=True)
        )
        versions = sorted(
            snap_dir.glob("snapshot-v*.json"),
            key=lambda p: int(p.stem.removeprefix("snapshot-v")),
        )
        for old in versions[:-keep]:
            old.unlink()

    def _overlay(self, event: InteractionEvent) -> None:
        """Fold one live event into the current snapshot without a full
        rebuild: only the acting user's profile, history, and style vector
        are recomputed (against the snapshot's idf); everyone else waits for
        the nightly job."""
        if self.snapshot is None:
            return
        snap = self.snapshot
        events = snap.events + [event]
        user_id = event.user_id
        users = dict(snap.users)
        if user_id in self.users:
            users[user_id] = self.users[user_id]

        user_profiles = dict(snap.user_profiles)
        item_profiles = dict(snap.item_profiles)
        seen = {u: set(s) for u, s in snap.seen.items()}
        user_styles = dict(snap.user_styles)
        now = max(snap.now, event.timestamp)

        if event.kind in ("view", "like", "upload"):
            seen.setdefault(user_id, set()).add(event.target_id)
        if event.kind in ("view", "like"):
            mine = [e for e in events if e.user_id == user_id]
            # fresh decayed tf for the acting user, reweighted by the
            # snapshot's global idf so the overlay profile stays on the same
            # scale as everyone else's
            tf = decayed_tf(mine, now, self.config.decay_beta).get(user_id, {})
            fallback_idf = default_idf(snap.doc_count)
            user_profiles[user_id] = TfidfProfile(
                {o: w * snap.idf.get(o, fallback_idf) for o, w in tf.items()}
            )
            history = [
                e.target_id
                for e in sorted(mine, key=lambda e: e.timestamp, reverse=True)
                if e.kind in ("view", "like")
            ]
            try:
                from .style import user_style_vector

                user_styles[user_id] = user_style_vector(
                    history, snap.ootd_styles, self.config.history_window,
                    self.config.recency_alpha,
                )
            except ColdStartError:
                user_styles[user_id] = None
            profile = item_profiles.get(event.target_id, TfidfProfile())
            weights = dict(profile.weights)
            kind_w = {"view": self.config.view_weight, "like": self.config.like_weight}
            weights[user_id] = weights.get(user_id, 0.0) + kind_w.get(event.kind, 1.0)
            item_profiles[event.target_id] = TfidfProfile(weights)

        self.snapshot = RecSnapshot(
            config=snap.config,
            now=now,
            users=users,
            ootds=dict(self.ootds),
            ootd_styles=snap.ootd_styles,
            user_styles=user_styles,
            upload_styles=snap.upload_styles,
            user_profiles=user_profiles,
            item_profiles=item_profiles,
            seen=seen,
            events=events,
            version=snap.version + 1,
            idf=snap.idf,
            doc_count=snap.doc_count,
        )

    def require_snapshot(self) -> RecSnapshot:
        if self.snapshot is None:
            self._swap_snapshot()
        return self.snapshot

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def feed(self, user_id: str, k: int) -> tuple[list[ScoredId], int]:
        snap = self.require_snapshot()
        if user_id not in snap.users:
            raise UnknownEntityError(f"unknown user {user_id!r}")
        return recommend.curate_feed(snap, user_id, k), snap.version

    def similar_items(self, item_id: int, k: int) -> tuple[list[tuple[int, float]], int]:
        snap = self.require_snapshot()
        if item_id not in self.items:
            raise UnknownEntityError(f"unknown item {item_id}")
        item = self.items[item_id]
        if item.embeddings is None:
            raise ContractViolation(f"item {item_id} has no embeddings")
        sup = self.hierarchy.super_of(item.sub_category)
        hits = self.catalog.search(sup, np.asarray(item.embeddings.f_search), k + 1)
        return [(i, s) for i, s in hits if i != item_id][:k], snap.version

    def similar_by_vector(self, super_category: str, vector: np.ndarray, k: int):
        snap = self.require_snapshot()
        if not self.hierarchy.is_super(super_category):
            raise UnknownEntityError(f"unknown super-category {super_category!r}")
        return self.catalog.search(super_category, vector, k), snap.version

    def similar_ootds(self, ootd_id: str, k: int) -> tuple[list[ScoredId], int]:
        snap = self.require_snapshot()
        if ootd_id not in snap.ootds:
            raise UnknownEntityError(f"unknown OOTD {ootd_id!r}")
        return recommend.similar_ootds(snap, ootd_id, k), snap.version

    def style_leaders(self, user_id: str, k: int) -> tuple[list[ScoredId], int]:
        snap = self.require_snapshot()
        if user_id not in snap.users:
            raise UnknownEntityError(f"unknown user {user_id!r}")
        return recommend.suggest_style_leaders(snap, user_id, k), snap.version

    # ------------------------------------------------------------------
    # bulk ingest
    # ------------------------------------------------------------------

    def ingest_files(
        self,
        items_path: str | Path | None = None,
        ootds_path: str | Path | None = None,
        users_path: str | Path | None = None,
        interactions_path: str | Path | None = None,
        embedding_paths: tuple[str | Path, str | Path, str | Path] | None = None,
    ) -> dict[str, int]:
        """Load metadata/embedding/interaction files into the stores and
        report counts. Embedding files are joined to items by id."""
        counts: dict[str, int] = {}
        with self._lock:
            blocks: Mapping[int, EmbeddingBlock] = {}
            if embedding_paths is not None:
                blocks = dataio.load_embedding_blocks(
                    *embedding_paths,
                    dims=(
                        self.config.dim_classifier,
                        self.config.dim_tagger,
                        self.config.dim_search,
                    ),
                )
                counts["embeddings"] = len(blocks)
            if items_path is not None:
                items = dataio.load_jsonl(items_path, _item_from_json)
                for item in items:
                    if item.embeddings is None and item.item_id in blocks:
                        item = replace(item, embeddings=blocks[item.item_id])
                    item.validate(self.hierarchy, self.config.dim_search)
                    self.items[item.item_id] = item
                counts["items"] = len(items)
            if users_path is not None:
                users = dataio.load_users(users_path)
                for user in users:
                    self.users[user.user_id] = user
                counts["users"] = len(users)
            if ootds_path is not None:
                ootds = dataio.load_ootds(ootds_path)
                for ootd in ootds:
                    missing = [i for i in ootd.item_ids if i not in self.items]
                    if missing:
                        raise ContractViolation(
                            f"OOTD {ootd.ootd_id!r} references unknown items {missing}"
                        )
                    self.ootds[ootd.ootd_id] = ootd
                counts["ootds"] = len(ootds)
            if interactions_path is not None:
                events = dataio.load_interactions(interactions_path)
                self.events.extend(events)
                self.events.sort(key=lambda e: e.timestamp)
                counts["interactions"] = len(events)
            self.flush()
        return counts


def _item_to_json(item: ItemRecord) -> dict:
    obj = dataio.item_to_json(item)
    if item.embeddings is not None:
        obj["embeddings"] = {
            "classifier": np.asarray(item.embeddings.f_classifier, dtype=float).tolist(),
            "tagger": np.asarray(item.embeddings.f_tagger, dtype=float).tolist(),
            "search": np.asarray(item.embeddings.f_search, dtype=float).tolist(),
        }
    return obj


def _item_from_json(obj: dict) -> ItemRecord:
    item = dataio.item_from_json(obj)
    if "embeddings" in obj and obj["embeddings"] is not None:
        e = obj["embeddings"]
        item = replace(
            item,
            embeddings=EmbeddingBlock(
                np.asarray(e["classifier"], dtype=np.float64),
                np.asarray(e["tagger"], dtype=np.float64),
                np.asarray(e["search"], dtype=np.float64),
            ),
        )
    return item
