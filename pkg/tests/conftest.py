import numpy as np
import pytest

from itoo.config import EngineConfig
from itoo.records import EmbeddingBlock, ItemRecord
from itoo.taxonomy import default_hierarchy


@pytest.fixture(scope="session")
def hierarchy():
    return default_hierarchy()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    # cheap index parameters for fixtures that rebuild often
    return EngineConfig(hnsw_ef_construction=50, hnsw_ef_search=32)


def make_item(item_id: int, sub: str, vec2: tuple[float, float] | None = None,
              color: str | None = None, search_dim: int = 4) -> ItemRecord:
    """Tiny item helper: 2-d classifier head, 0-d tagger, fixed search head."""
    if vec2 is None:
        vec2 = (float(item_id), 0.0)
    search = np.zeros(search_dim)
    search[item_id % search_dim] = 1.0
    return ItemRecord(
        item_id=item_id,
        sub_category=sub,
        color_tag=color,
        embeddings=EmbeddingBlock(np.array(vec2, dtype=float), np.zeros(0), search),
    )
