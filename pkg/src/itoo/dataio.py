"""On-disk formats for the engine's stores.

- Embedding file: binary, little-endian. Header ``ITOOVEC1`` (8 bytes),
  u32 vector_dim, u64 record_count; records are (u64 item_id, dim x f32).
- Interaction log: CSV ``timestamp_iso8601,user_id,kind,target_id``.
- Item/OOTD/user metadata: JSON-lines, one object per line.
- Metric-learning labels: CSV ``image_id,class_id``.
"""

from __future__ import annotations

import csv
import json
import struct
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError, SchemaError
from .records import EmbeddingBlock, InteractionEvent, ItemRecord, OotdPost, UserProfile

VEC_MAGIC = b"ITOOVEC1"
_VEC_HEADER = struct.Struct("<8sIQ")
_VEC_ID = struct.Struct("<Q")


def save_embeddings(path: str | Path, vectors: Mapping[int, np.ndarray]) -> None:
    """Write an embedding file. All vectors must share one dimension."""
    items = sorted(vectors.items())
    if items:
        dim = len(items[0][1])
    else:
        dim = 0
    with open(path, "wb") as f:
        f.write(_VEC_HEADER.pack(VEC_MAGIC, dim, len(items)))
        for item_id, vec in items:
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise SchemaError(f"vector for item {item_id} has shape {arr.shape}, expected ({dim},)")
            f.write(_VEC_ID.pack(item_id))
            f.write(arr.tobytes())


def load_embeddings(path: str | Path, expected_dim: int | None = None) -> dict[int, np.ndarray]:
    """Read an embedding file into item_id -> float32 vector."""
    with open(path, "rb") as f:
        header = f.read(_VEC_HEADER.size)
        if len(header) < _VEC_HEADER.size:
            raise ParseError("truncated header", path=str(path))
        magic, dim, count = _VEC_HEADER.unpack(header)
        if magic != VEC_MAGIC:
            raise ParseError(f"bad magic {magic!r}", path=str(path))
        if expected_dim is not None and dim != expected_dim:
            raise SchemaError(f"embedding dim {dim} != configured {expected_dim} in {path}")
        record_size = _VEC_ID.size + dim * 4
        out: dict[int, np.ndarray] = {}
        for i in range(count):
            rec = f.read(record_size)
            if len(rec) < record_size:
                raise ParseError(f"truncated record {i} of {count}", path=str(path))
            (item_id,) = _VEC_ID.unpack_from(rec)
            out[item_id] = np.frombuffer(rec, dtype="<f4", count=dim, offset=_VEC_ID.size).copy()
        if f.read(1):
            raise ParseError(f"trailing bytes after {count} records", path=str(path))
    return out


def load_embedding_blocks(
    classifier_path: str | Path,
    tagger_path: str | Path,
    search_path: str | Path,
    *,
    dims: tuple[int, int, int] | None = None,
) -> dict[int, EmbeddingBlock]:
    """Join the three per-head embedding files into blocks, intersecting ids."""
    dc, da, ds = dims if dims is not None else (None, None, None)
    f_c = load_embeddings(classifier_path, dc)
    f_a = load_embeddings(tagger_path, da)
    f_s = load_embeddings(search_path, ds)
    ids = set(f_c) & set(f_a) & set(f_s)
    return {
        i: EmbeddingBlock(f_c[i], f_a[i], f_s[i]) for i in sorted(ids)
    }


def _parse_timestamp(raw: str, path: str, lineno: int) -> datetime:
    try:
        return datetime.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"bad timestamp {raw!r}", path=path, line=lineno) from None


def load_interactions(path: str | Path) -> list[InteractionEvent]:
    events: list[InteractionEvent] = []
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (lineno == 1 and row[0] == "timestamp"):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", path=str(path), line=lineno)
            ts, user_id, kind, target_id = (c.strip() for c in row)
            if kind not in ("view", "like", "upload", "follow"):
                raise ParseError(f"unknown kind {kind!r}", path=str(path), line=lineno)
            events.append(
                InteractionEvent(_parse_timestamp(ts, str(path), lineno), user_id, kind, target_id)
            )
    return events


def append_interaction(path: str | Path, event: InteractionEvent) -> None:
    with open(path, "a", newline="", encoding="utf-8") as f:
        csv.writer(f).writerow(
            [event.timestamp.isoformat(), event.user_id, event.kind, event.target_id]
        )
        f.flush()


def save_interactions(path: str | Path, events: Iterable[InteractionEvent]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        for e in events:
            w.writerow([e.timestamp.isoformat(), e.user_id, e.kind, e.target_id])


def item_to_json(item: ItemRecord) -> dict:
    return {
        "item_id": item.item_id,
        "sub_category": item.sub_category,
        "color_tag": item.color_tag,
        "attribute_tags": sorted([g, v] for g, v in item.attribute_tags),
    }


def item_from_json(obj: dict) -> ItemRecord:
    return ItemRecord(
        item_id=int(obj["item_id"]),
        sub_category=obj["sub_category"],
        color_tag=obj.get("color_tag"),
        attribute_tags=frozenset((g, v) for g, v in obj.get("attribute_tags", [])),
    )


def ootd_to_json(ootd: OotdPost) -> dict:
    return {
        "ootd_id": ootd.ootd_id,
        "uploader_id": ootd.uploader_id,
        "item_ids": list(ootd.item_ids),
        "hashtags": sorted(ootd.hashtags),
        "created_at": ootd.created_at.isoformat(),
    }


def ootd_from_json(obj: dict) -> OotdPost:
    return OotdPost(
        ootd_id=str(obj["ootd_id"]),
        uploader_id=str(obj["uploader_id"]),
        item_ids=tuple(int(i) for i in obj["item_ids"]),
        hashtags=frozenset(obj.get("hashtags", [])),
        created_at=datetime.fromisoformat(obj["created_at"]),
    )


def user_to_json(user: UserProfile) -> dict:
    return {
        "user_id": user.user_id,
        "gender": user.gender,
        "birth_year": user.birth_year,
        "preference_tags": sorted(user.preference_tags),
        "follows": sorted(user.follows),
    }


def user_from_json(obj: dict) -> UserProfile:
    return UserProfile(
        user_id=str(obj["user_id"]),
        gender=obj.get("gender"),
        birth_year=obj.get("birth_year"),
        preference_tags=frozenset(obj.get("preference_tags", [])),
        follows=frozenset(obj.get("follows", [])),
    )


def load_jsonl(path: str | Path, from_json) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON: {e.msg}", path=str(path), line=lineno) from None
            try:
                out.append(from_json(obj))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad record: {e}", path=str(path), line=lineno) from None
    return out


def save_jsonl(path: str | Path, objects: Iterable, to_json) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for obj in objects:
            f.write(json.dumps(to_json(obj), sort_keys=True) + "\n")


def append_jsonl(path: str | Path, obj, to_json) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(to_json(obj), sort_keys=True) + "\n")
        f.flush()


def load_items(path: str | Path) -> list[ItemRecord]:
    return load_jsonl(path, item_from_json)


def load_ootds(path: str | Path) -> list[OotdPost]:
    return load_jsonl(path, ootd_from_json)


def load_users(path: str | Path) -> list[UserProfile]:
    return load_jsonl(path, user_from_json)


def load_labels(path: str | Path) -> dict[str, int]:
    """Metric-learning labels CSV: image_id,class_id."""
    labels: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (lineno == 1 and row[0] == "image_id"):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", path=str(path), line=lineno)
            labels[row[0].strip()] = int(row[1])
    return labels


def save_labels(path: str | Path, labels: Mapping[str, int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "class_id"])
        for image_id, class_id in labels.items():
            w.writerow([image_id, class_id])
