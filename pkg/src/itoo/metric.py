"""Desk-scale metric learning: N-pair batches, NT-Xent loss and its analytic
gradient over a trainable embedding table, and top-k retrieval evaluation.

The table of free embedding rows stands in for a CNN: training moves rows
directly by SGD. Embeddings are L2-normalized inside the loss but stored
unnormalized, which keeps the gradient exactly checkable against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation, SamplingError, TrainingDiverged

ImageId = Hashable


class EmbeddingTable:
    """image_id -> trainable float64 row of fixed dimension."""

    def __init__(self, ids: Sequence[ImageId], rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(ids):
            raise ContractViolation(f"rows shape {rows.shape} does not match {len(ids)} ids")
        if not np.all(np.isfinite(rows)):
            raise ContractViolation("embedding table contains non-finite entries")
        self.ids = list(ids)
        self.rows = rows
        self.index = {img: i for i, img in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ContractViolation("duplicate image ids in table")

    @classmethod
    def random_init(
        cls, ids: Sequence[ImageId], dim: int, rng: np.random.Generator, scale: float | None = None
    ) -> "EmbeddingTable":
        # Default to ~unit-norm rows: cosine-space SGD steps are angular, so
        # oversized rows make the same gradient move the angle less.
        if scale is None:
            scale = 1.0 / np.sqrt(dim)
        return cls(ids, rng.normal(scale=scale, size=(len(ids), dim)))

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def vector(self, image_id: ImageId) -> np.ndarray:
        return self.rows[self.index[image_id]]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(list(self.ids), self.rows.copy())


@dataclass(frozen=True)
class NPairBatch:
    """N anchor/positive pairs from N distinct classes; within the batch
    every non-matching positive serves as a negative."""

    anchors: tuple[ImageId, ...]
    positives: tuple[ImageId, ...]
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractViolation(f"temperature must be > 0, got {self.temperature}")
        if len(self.anchors) != len(self.positives):
            raise ContractViolation("anchors and positives must be parallel lists")
        if len(self.anchors) < 2:
            raise ContractViolation("need N >= 2 pairs")
        seen = set(self.anchors) | set(self.positives)
        if len(seen) != 2 * len(self.anchors):
            raise ContractViolation("all 2N batch images must be distinct")

    @property
    def size(self) -> int:
        return len(self.anchors)


def sample_npair_batch(
    labels: Mapping[ImageId, int],
    n_pairs: int,
    rng: np.random.Generator,
    temperature: float = 0.1,
    sources: Mapping[ImageId, str] | None = None,
    source_weights: Mapping[str, float] | None = None,
) -> NPairBatch:
    """Draw N anchor/positive pairs from N distinct classes.

    Anchors are drawn image-by-image with probability proportional to their
    source's weight (uniform when no weights given), rejecting classes that
    are already taken; the positive is a different image of the same class.
    """
    if n_pairs < 2:
        raise ContractViolation("n_pairs must be >= 2")
    by_class: dict[int, list[ImageId]] = {}
    for img, cls in labels.items():
        by_class.setdefault(cls, []).append(img)
    eligible_classes = {c for c, imgs in by_class.items() if len(imgs) >= 2}
    if len(eligible_classes) < n_pairs:
        raise SamplingError(
            f"need at least {n_pairs} classes with >= 2 images, have {len(eligible_classes)}"
        )

    pool = sorted(
        (img for img, cls in labels.items() if cls in eligible_classes),
        key=str,
    )
    if source_weights is not None:
        weights = np.array(
            [source_weights.get(sources.get(img) if sources else None, 1.0) for img in pool],
            dtype=np.float64,
        )
    else:
        weights = np.ones(len(pool), dtype=np.float64)
    probs = weights / weights.sum()

    anchors: list[ImageId] = []
    positives: list[ImageId] = []
    taken_classes: set[int] = set()
    while len(anchors) < n_pairs:
        img = pool[int(rng.choice(len(pool), p=probs))]
        cls = labels[img]
        if cls in taken_classes:
            continue
        mates = [m for m in by_class[cls] if m != img]
        positive = mates[int(rng.integers(len(mates)))]
        taken_classes.add(cls)
        anchors.append(img)
        positives.append(positive)
    return NPairBatch(tuple(anchors), tuple(positives), temperature)


def _normalized(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractViolation("zero embedding row inside the loss")
    return rows / norms, norms


def _batch_matrices(table: EmbeddingTable, batch: NPairBatch):
    a_idx = np.array([table.index[i] for i in batch.anchors])
    p_idx = np.array([table.index[i] for i in batch.positives])
    za, na = _normalized(table.rows[a_idx])
    zp, np_ = _normalized(table.rows[p_idx])
    scores = za @ zp.T  # cosine since rows are unit
    return a_idx, p_idx, za, na, zp, np_, scores


def nt_xent_loss(table: EmbeddingTable, batch: NPairBatch) -> float:
    """Mean over anchors i of -log softmax_j(cos(z_i, z_j+)/tau)[i]."""
    *_, scores = _batch_matrices(table, batch)
    logits = scores / batch.temperature
    logits -= logits.max(axis=1, keepdims=True)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return float(-log_probs.diagonal().mean())


def nt_xent_gradient(table: EmbeddingTable, batch: NPairBatch) -> dict[ImageId, np.ndarray]:
    """Analytic gradient of nt_xent_loss with respect to every participating
    row (through the L2 normalization). Non-participating rows are absent."""
    a_idx, p_idx, za, na, zp, np_, scores = _batch_matrices(table, batch)
    n = batch.size
    logits = scores / batch.temperature
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    d_scores = (probs - np.eye(n)) / (batch.temperature * n)

    g_za = d_scores @ zp
    g_zp = d_scores.T @ za
    # through z = e / ||e||: grad_e = (g - (g . z) z) / ||e||
    g_ea = (g_za - (g_za * za).sum(axis=1, keepdims=True) * za) / na
    g_ep = (g_zp - (g_zp * zp).sum(axis=1, keepdims=True) * zp) / np_

    grads: dict[ImageId, np.ndarray] = {}
    for img, g in zip(batch.anchors, g_ea):
        grads[img] = grads.get(img, 0) + g
    for img, g in zip(batch.positives, g_ep):
        grads[img] = grads.get(img, 0) + g
    return grads


@dataclass(frozen=True)
class TrainConfig:
    n_pairs: int = 32
    temperature: float = 0.1
    learning_rate: float = 0.1
    epochs: int = 200
    seed: int = 0
    source_weights: dict[str, float] | None = None


@dataclass
class TrainResult:
    table: EmbeddingTable
    loss_curve: list[float]

    @property
    def smoothed_curve(self) -> list[float]:
        """Monotone (running-minimum) view of the loss curve."""
        return np.minimum.accumulate(self.loss_curve).tolist()


def _canonical_batches(
    labels: Mapping[ImageId, int], n_pairs: int, temperature: float
) -> list[NPairBatch]:
    """Deterministic evaluation batches: classes in sorted order, anchor and
    positive the two lexicographically first images of each class."""
    by_class: dict[int, list[ImageId]] = {}
    for img, cls in labels.items():
        by_class.setdefault(cls, []).append(img)
    pairs = [
        (sorted(imgs, key=str)[0], sorted(imgs, key=str)[1])
        for cls, imgs in sorted(by_class.items())
        if len(imgs) >= 2
    ]
    batches = []
    for start in range(0, len(pairs) - n_pairs + 1, n_pairs):
        chunk = pairs[start : start + n_pairs]
        batches.append(
            NPairBatch(tuple(a for a, _ in chunk), tuple(p for _, p in chunk), temperature)
        )
    return batches


def train(
    table: EmbeddingTable,
    labels: Mapping[ImageId, int],
    config: TrainConfig,
    sources: Mapping[ImageId, str] | None = None,
) -> TrainResult:
    """SGD over the table with per-epoch batch resampling. Deterministic
    under the config seed; aborts on non-finite loss.

    The loss curve is measured after each epoch on a canonical batch
    partition (not on the sampled training batches), so it is a pure
    function of the table: with a zero learning rate it is exactly flat.
    """
    table = table.copy()
    rng = np.random.default_rng(config.seed)
    class_count = len({c for c in labels.values()})
    n_pairs = min(config.n_pairs, max(2, class_count))
    steps_per_epoch = max(1, class_count // n_pairs)
    eval_batches = _canonical_batches(labels, n_pairs, config.temperature)

    curve: list[float] = []
    for epoch in range(config.epochs):
        for _ in range(steps_per_epoch):
            batch = sample_npair_batch(
                labels,
                n_pairs,
                rng,
                temperature=config.temperature,
                sources=sources,
                source_weights=config.source_weights,
            )
            loss = nt_xent_loss(table, batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            if config.learning_rate != 0.0:
                for img, grad in nt_xent_gradient(table, batch).items():
                    table.rows[table.index[img]] -= config.learning_rate * grad
        if eval_batches:
            curve.append(float(np.mean([nt_xent_loss(table, b) for b in eval_batches])))
        else:
            curve.append(loss)
    return TrainResult(table, curve)


@dataclass(frozen=True)
class TopkReport:
    accuracy: dict[int, float]
    n_queries: int
    n_skipped: int  # query classes absent from the gallery

    def rows(self) -> list[dict]:
        return [
            {"k": k, "accuracy": acc, "n_queries": self.n_queries}
            for k, acc in sorted(self.accuracy.items())
        ]


def evaluate_topk(
    table: EmbeddingTable,
    query_ids: Sequence[ImageId],
    gallery_ids: Sequence[ImageId],
    labels: Mapping[ImageId, int],
    ks: Iterable[int] = (1, 5, 10, 20),
    search_fn: Callable[[np.ndarray, int], Sequence[ImageId]] | None = None,
) -> TopkReport:
    """Fraction of queries whose top-k retrieved gallery images contain a
    same-class image. Queries and gallery must be disjoint; query classes
    absent from the gallery are excluded from the denominator and counted
    separately. ``search_fn`` may replace the brute-force ranking (it gets
    the raw query vector and k, returns ranked gallery ids)."""
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise ContractViolation("ks must be positive")
    if set(query_ids) & set(gallery_ids):
        raise ContractViolation("query and gallery sets must be disjoint")
    gallery_classes = {labels[g] for g in gallery_ids}
    max_k = ks[-1]

    if search_fn is None:
        g_rows = np.stack([table.vector(g) for g in gallery_ids])
        g_unit = g_rows / np.linalg.norm(g_rows, axis=1, keepdims=True)
        g_ids = np.array([str(g) for g in gallery_ids])

        def search_fn(vec: np.ndarray, k: int) -> Sequence[ImageId]:
            q = vec / np.linalg.norm(vec)
            scores = g_unit @ q
            order = np.lexsort((g_ids, -scores))[:k]
            return [gallery_ids[i] for i in order]

    hits = {k: 0 for k in ks}
    n_eval = 0
    n_skipped = 0
    for q in query_ids:
        if labels[q] not in gallery_classes:
            n_skipped += 1
            continue
        n_eval += 1
        ranked = list(search_fn(table.vector(q), max_k))
        for k in ks:
            if any(labels[r] == labels[q] for r in ranked[:k]):
                hits[k] += 1
    accuracy = {k: (hits[k] / n_eval if n_eval else 0.0) for k in ks}
    return TopkReport(accuracy, n_eval, n_skipped)


def self_retrieval_top1(table: EmbeddingTable, labels: Mapping[ImageId, int]) -> float:
    """Leave-one-out nearest-neighbor accuracy: for every image, is its
    nearest other image of the same class?"""
    ids = [i for i in table.ids if i in labels]
    rows = np.stack([table.vector(i) for i in ids])
    unit = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    gram = unit @ unit.T
    np.fill_diagonal(gram, -np.inf)
    nearest = gram.argmax(axis=1)
    return float(
        np.mean([labels[ids[i]] == labels[ids[int(j)]] for i, j in enumerate(nearest)])
    )
