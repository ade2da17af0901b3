"""Synthetic fixture data: deterministic item tiles, composed OOTD photos,
and a structured demo dataset with style groups so the personalization loop
is observable (liking one group's posts shifts the feed toward that group).
"""

from __future__ import annotations

import zlib
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .engine import Engine
from .imaging import RasterImage
from .records import UserProfile

COLOR_RGB = {
    "black": (30, 30, 30),
    "white": (235, 235, 235),
    "red": (200, 40, 40),
    "blue": (40, 70, 190),
    "navy": (25, 35, 90),
    "green": (40, 150, 70),
    "beige": (205, 185, 150),
    "gray": (128, 128, 128),
    "brown": (120, 80, 50),
    "pink": (230, 130, 170),
}

TILE_WIDTH = 64
TILE_HEIGHT = 40
GAP_ROWS = 12

STYLE_GROUPS = {
    "denim": {
        "hashtags": ("denim", "casual"),
        "outfits": [("jacket", "blue"), ("t-shirt", "white"), ("jeans", "blue"), ("sneakers", "white")],
    },
    "office": {
        "hashtags": ("office", "formal"),
        "outfits": [("blazer", "navy"), ("shirt", "white"), ("slacks", "gray"), ("loafers", "brown")],
    },
    "street": {
        "hashtags": ("street", "sporty"),
        "outfits": [("hoodie", "black"), ("cargo-pants", "green"), ("sneakers", "black"), ("backpack", "black")],
    },
}


def synthesize_item_tile(
    sub_category: str, color: str, variant: int = 0, width: int = TILE_WIDTH, height: int = TILE_HEIGHT
) -> RasterImage:
    """A deterministic tile for one item: base color, a sub-category stripe
    pattern, and a (sub, color, variant)-seeded noise field. Deltas stay
    clip-free so distinct identities always produce distinct cell
    statistics, and process-independent seeding (crc32, not hash()) keeps
    content signatures stable across restarts. Every row is non-uniform so
    the row-split detector sees the tile as content."""
    base = np.clip(np.array(COLOR_RGB.get(color, (150, 150, 150)), dtype=np.int32), 30, 215)
    px = np.tile(base, (height, width, 1))
    key = zlib.crc32(f"{sub_category}|{color}|{variant}".encode())
    stripe = 2 + key % 5
    phase = (key >> 4) % stripe
    cols = (np.arange(width) + phase) // stripe % 2 == 0
    px[:, cols] += 22
    rows = (np.arange(height) + key % 7) % 9 == 0
    px[rows] -= 18
    noise = np.random.default_rng(key).integers(-6, 7, size=px.shape)
    return RasterImage(np.clip(px + noise, 0, 255).astype(np.uint8))


def compose_ootd_image(tiles: Sequence[RasterImage], gap_rows: int = GAP_ROWS) -> RasterImage:
    """Stack tiles vertically with white separator gaps, as in a crawled
    descriptive image."""
    if not tiles:
        raise ValueError("need at least one tile")
    width = max(t.width for t in tiles)
    gap = np.full((gap_rows, width, 3), 255, dtype=np.uint8)
    parts: list[np.ndarray] = [gap]
    for tile in tiles:
        padded = np.full((tile.height, width, 3), 255, dtype=np.uint8)
        padded[:, : tile.width] = tile.pixels
        parts.append(padded)
        parts.append(gap)
    return RasterImage(np.vstack(parts))


def register_outfit(engine: Engine, outfit: Sequence[tuple[str, str]], variant: int = 0) -> RasterImage:
    """Synthesize the outfit photo and teach the stub catalog each tile's
    ground truth (sub-category and color tag)."""
    tiles = []
    for sub, color in outfit:
        tile = synthesize_item_tile(sub, color, variant)
        engine.stub_catalog.register(tile, sub, frozenset({("color", color)}))
        tiles.append(tile)
    return compose_ootd_image(tiles)


def generate_demo_dataset(
    engine: Engine,
    uploads_per_group: int = 5,
    audience_per_group: int = 4,
    seed: int = 11,
    start: datetime | None = None,
) -> None:
    """Populate the engine with three style groups of uploaders, audiences
    that view/like within their group, and follow edges; finishes with a
    rebuild so everything is queryable."""
    rng = np.random.default_rng(seed)
    start = start or datetime(2026, 8, 1, 12, 0, tzinfo=timezone.utc)
    tick = 0

    def next_time() -> datetime:
        nonlocal tick
        tick += 1
        return start + timedelta(minutes=10 * tick)

    group_ootds: dict[str, list[str]] = {g: [] for g in STYLE_GROUPS}
    group_users: dict[str, list[str]] = {g: [] for g in STYLE_GROUPS}

    for gi, (group, spec) in enumerate(STYLE_GROUPS.items()):
        for u in range(uploads_per_group):
            uid = f"{group}_up{u}"
            engine.add_user(
                UserProfile(
                    user_id=uid,
                    gender="female" if (u + gi) % 2 == 0 else "male",
                    birth_year=1990 + 2 * gi + u % 3,
                    preference_tags=frozenset(spec["hashtags"]),
                )
            )
            group_users[group].append(uid)
        for a in range(audience_per_group):
            uid = f"{group}_fan{a}"
            engine.add_user(
                UserProfile(
                    user_id=uid,
                    gender="female" if a % 2 == 0 else "male",
                    birth_year=1992 + gi + a % 4,
                    preference_tags=frozenset(spec["hashtags"]),
                )
            )
            group_users[group].append(uid)

    for group, spec in STYLE_GROUPS.items():
        uploaders = [u for u in group_users[group] if "_up" in u]
        for u, uid in enumerate(uploaders):
            # vary the outfit slightly per upload so embeddings differ
            outfit = list(spec["outfits"])
            if u % 2 == 1:
                outfit = outfit[:3]
            image = register_outfit(engine, outfit, variant=u)
            post, _ = engine.upload_ootd(
                uid, image, hashtags=spec["hashtags"], created_at=next_time()
            )
            group_ootds[group].append(post.ootd_id)

    # audiences view and like inside their group, with a little crossover
    all_groups = list(STYLE_GROUPS)
    for group in STYLE_GROUPS:
        fans = [u for u in group_users[group] if "_fan" in u]
        for fan in fans:
            for ootd in group_ootds[group]:
                engine.record_interaction(fan, "view", ootd, next_time())
                if rng.random() < 0.7:
                    engine.record_interaction(fan, "like", ootd, next_time())
            other = all_groups[(all_groups.index(group) + 1) % len(all_groups)]
            crossover = group_ootds[other][0]
            engine.record_interaction(fan, "view", crossover, next_time())

    # follow edges: fans follow some uploaders of their group
    for group in STYLE_GROUPS:
        uploaders = [u for u in group_users[group] if "_up" in u]
        fans = [u for u in group_users[group] if "_fan" in u]
        for i, fan in enumerate(fans):
            engine.record_interaction(fan, "follow", uploaders[i % len(uploaders)], next_time())
            engine.record_interaction(
                fan, "follow", uploaders[(i + 1) % len(uploaders)], next_time()
            )
    # uploader chains so two-hop walks have somewhere to go
    for group in STYLE_GROUPS:
        uploaders = [u for u in group_users[group] if "_up" in u]
        for i, uid in enumerate(uploaders):
            engine.record_interaction(uid, "follow", uploaders[(i + 1) % len(uploaders)], next_time())

    # a probe user who has seen a little of everything
    engine.add_user(
        UserProfile(
            user_id="probe",
            gender="female",
            birth_year=1995,
            preference_tags=frozenset(),
        )
    )
    for group in STYLE_GROUPS:
        engine.record_interaction("probe", "view", group_ootds[group][0], next_time())

    engine.rebuild()
