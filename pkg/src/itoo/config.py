"""Engine configuration: defaults, key-value config files, ITOO_* env overrides.

Config files are plain ``key = value`` lines; keys match the field names of
:class:`EngineConfig`. Environment variables named ``ITOO_<KEY>`` (upper-case
field name) override file values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ContractViolation, ParseError


@dataclass(frozen=True)
class EngineConfig:
    # Embedding dimensions. The search head is fixed at 128 by default; the
    # classifier/tagger head sizes are not pinned anywhere upstream.
    dim_classifier: int = 32
    dim_tagger: int = 32
    dim_search: int = 128

    # Category hierarchy file (sub<TAB>super lines); empty = built-in taxonomy
    hierarchy_path: str = ""

    # HNSW index
    hnsw_m: int = 16
    hnsw_ef_construction: int = 200
    hnsw_ef_search: int = 64
    hnsw_seed: int = 2024
    shard_count: int = 1

    # Recommender blending and decay
    lambda_ootd: float = 0.5
    lambda_user: float = 0.5
    lambda_cf: float = 0.5
    shrinkage: float = 10.0
    recency_alpha: float = 0.5
    decay_beta: float = 0.9
    history_window: int = 50
    eps_decay: float = 1e-3
    view_weight: float = 1.0
    like_weight: float = 3.0
    neighbor_count: int = 20

    # Feed mixing (quota interleave); must sum to 1
    mix_cfcbf: float = 0.6
    mix_weekly: float = 0.2
    mix_segment: float = 0.2
    weekly_window_days: int = 7

    # Style-leader mixing
    leader_mix_latent: float = 0.4
    leader_mix_graph: float = 0.3
    leader_mix_segment: float = 0.15
    leader_mix_popular: float = 0.15
    walk_count: int = 100
    walk_seed: int = 7

    # Metric learning
    npair_size: int = 32
    temperature: float = 0.1
    learning_rate: float = 0.1
    epochs: int = 200
    train_seed: int = 0

    # Ingest
    dedup_threshold: int = 4
    split_min_gap_rows: int = 16
    split_uniformity_tol: int = 8

    # Detection post-processing
    iou_threshold: float = 0.3

    # Pipeline / DAG
    workers: int = 4

    def __post_init__(self):
        for name in ("lambda_ootd", "lambda_user", "lambda_cf"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"{name} must be in [0, 1], got {v}")
        if self.shrinkage < 0:
            raise ContractViolation("shrinkage must be >= 0")
        if not 0.0 < self.recency_alpha < 1.0:
            raise ContractViolation("recency_alpha must be in (0, 1)")
        if not 0.0 < self.decay_beta < 1.0:
            raise ContractViolation("decay_beta must be in (0, 1)")
        if self.history_window < 1:
            raise ContractViolation("history_window must be >= 1")
        mix = self.mix_cfcbf + self.mix_weekly + self.mix_segment
        if abs(mix - 1.0) > 1e-9:
            raise ContractViolation(f"feed mix ratios must sum to 1, got {mix}")

    @property
    def item_vector_dim(self) -> int:
        return self.dim_classifier + self.dim_tagger + self.dim_search

    @property
    def mix_ratios(self) -> tuple[float, float, float]:
        return (self.mix_cfcbf, self.mix_weekly, self.mix_segment)


def _coerce(raw: str, target_type: type):
    if target_type is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return target_type(raw)


def load_config(path: str | Path | None = None, env: dict | None = None) -> EngineConfig:
    """Build a config from defaults, an optional file, then env overrides."""
    values: dict = {}
    field_types = {f.name: f.type for f in fields(EngineConfig)}
    py_types = {"int": int, "float": float, "str": str, "bool": bool}

    if path is not None:
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"expected 'key = value', got {line!r}",
                                     path=str(path), line=lineno)
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in field_types:
                    raise ParseError(f"unknown config key {key!r}", path=str(path), line=lineno)
                values[key] = _coerce(value.strip(), py_types[field_types[key]])

    env = os.environ if env is None else env
    for name, type_name in field_types.items():
        env_key = "ITOO_" + name.upper()
        if env_key in env:
            values[name] = _coerce(env[env_key], py_types[type_name])

    return EngineConfig(**values)


def override(cfg: EngineConfig, **kwargs) -> EngineConfig:
    return replace(cfg, **kwargs)
