"""OOTD social-commerce engine: fashion visual search over per-category
HNSW indexes, hybrid CF-CBF personalized curation, style-leader suggestion,
and the dataset and inference plumbing around them."""

__version__ = "0.1.0"

from .config import EngineConfig, load_config
from .engine import Engine

__all__ = ["Engine", "EngineConfig", "load_config", "__version__"]
