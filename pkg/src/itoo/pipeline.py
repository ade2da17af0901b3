"""Upload inference pipeline: pluggable model stages over an OOTD image.

Stages are plain callables bundled in a PluginSet: the detector proposes
boxes, the classifier and tagger run per crop (in parallel), detection
post-processing applies the category-consistency and dress-exclusivity
rules, and the embedder turns every surviving crop into a unit vector
staged for the matching super-category index partition.

Stub plugins stand in for the CNNs at desk scale: deterministic under a
seed, driven by a content-signature catalog where provided.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractViolation
from .imaging import RasterImage, average_hash, split_descriptive_image
from .taxonomy import CategoryHierarchy

Tags = frozenset[tuple[str, str]]


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int
    super_category: str
    confidence: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ContractViolation(f"box must have positive size, got {self.w}x{self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractViolation(f"confidence must be in [0, 1], got {self.confidence}")

    def clipped(self, width: int, height: int) -> "BoundingBox":
        x = max(0, min(self.x, width - 1))
        y = max(0, min(self.y, height - 1))
        w = min(self.w, width - x)
        h = min(self.h, height - y)
        return BoundingBox(x, y, w, h, self.super_category, self.confidence)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    x0 = max(a.x, b.x)
    y0 = max(a.y, b.y)
    x1 = min(a.x + a.w, b.x + b.w)
    y1 = min(a.y + a.h, b.y + b.h)
    if x1 <= x0 or y1 <= y0:
        return 0.0
    inter = (x1 - x0) * (y1 - y0)
    return inter / (a.w * a.h + b.w * b.h - inter)


@dataclass(frozen=True)
class PluginSet:
    """The four model stages. Each is deterministic for fixed input/seed."""

    detector: Callable[[RasterImage], list[BoundingBox]]
    classifier: Callable[[RasterImage], tuple[str, float]]
    tagger: Callable[[RasterImage], Tags]
    embedder: Callable[[RasterImage], np.ndarray]


def postprocess_detections(
    boxes: list[BoundingBox],
    classifier_subs: list[str],
    hierarchy: CategoryHierarchy,
    iou_threshold: float,
    fallback: tuple[str, float] | Callable[[], tuple[str, float]],
    image_size: tuple[int, int],
) -> list[tuple[BoundingBox, str]]:
    """Detection cleanup rules:

    1. drop boxes whose classifier sub-category rolls up to a different
       super-category than the detector's;
    2. dresses and top/bottom items are mutually exclusive: on overlap
       (IoU > threshold) keep the higher-confidence side;
    3. never return nothing: an OOTD photo has at least one fashion item,
       so an emptied list becomes one whole-image box labeled with the
       classifier's whole-image prediction.
    """
    if len(boxes) != len(classifier_subs):
        raise ContractViolation("boxes and classifier labels must be parallel")
    kept = [
        (box, sub)
        for box, sub in zip(boxes, classifier_subs)
        if hierarchy.super_of(sub) == box.super_category
    ]

    alive = [True] * len(kept)
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            if not (alive[i] and alive[j]):
                continue
            a, b = kept[i][0], kept[j][0]
            pair = {a.super_category, b.super_category}
            if "dress" in pair and pair & {"top", "bottom"}:
                if iou(a, b) > iou_threshold:
                    if a.confidence >= b.confidence:
                        alive[j] = False
                    else:
                        alive[i] = False
    result = [kept[i] for i in range(len(kept)) if alive[i]]
    if result:
        return result

    width, height = image_size
    sub, confidence = fallback() if callable(fallback) else fallback
    whole = BoundingBox(0, 0, width, height, hierarchy.super_of(sub), confidence)
    return [(whole, sub)]


@dataclass(frozen=True)
class CropResult:
    index: int
    box: BoundingBox
    sub_category: str
    tags: Tags
    vector: np.ndarray | None
    error: str | None = None


@dataclass(frozen=True)
class StagedVector:
    super_category: str
    crop_index: int
    vector: np.ndarray


@dataclass(frozen=True)
class OotdAnalysis:
    crops: tuple[CropResult, ...]
    staged: tuple[StagedVector, ...]
    errors: tuple[str, ...] = ()


def run_ootd_pipeline(
    image: RasterImage,
    plugins: PluginSet,
    hierarchy: CategoryHierarchy,
    iou_threshold: float = 0.3,
    workers: int = 4,
) -> OotdAnalysis:
    """detect -> crop -> (classify || tag) -> postprocess -> embed -> stage.

    Per-crop stage failures are recorded and the rest of the pipeline keeps
    going; the post-processing fallback guarantees at least one crop.
    """
    errors: list[str] = []
    boxes = [b.clipped(image.width, image.height) for b in plugins.detector(image)]
    crops = [image.crop(b.x, b.y, b.w, b.h) for b in boxes]

    def classify_and_tag(crop: RasterImage):
        sub, conf = plugins.classifier(crop)  # classifier failure drops the crop
        try:
            tags = plugins.tagger(crop)
            tag_err = None
        except Exception as exc:  # tag failures degrade to untagged crops
            tags = frozenset()
            tag_err = f"tagger: {exc}"
        return sub, conf, tags, tag_err

    classified: list[tuple[BoundingBox, str, Tags]] = []
    if crops:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            outcomes = list(pool.map(lambda c: _guard(classify_and_tag, c), crops))
        for i, (outcome, exc) in enumerate(outcomes):
            if exc is not None:
                errors.append(f"crop {i} classifier: {exc}")
                continue
            sub, _conf, tags, tag_err = outcome
            if tag_err:
                errors.append(f"crop {i} {tag_err}")
            classified.append((boxes[i], sub, tags))

    def whole_image_fallback() -> tuple[str, float]:
        try:
            return plugins.classifier(image)
        except Exception as exc:
            errors.append(f"whole-image classifier: {exc}")
            return hierarchy.sub_categories[0], 0.0

    kept = postprocess_detections(
        [b for b, _, _ in classified],
        [s for _, s, _ in classified],
        hierarchy,
        iou_threshold,
        whole_image_fallback,  # lazy: only classified when everything dropped
        (image.width, image.height),
    )

    tag_lookup = {id(box): tags for box, _, tags in classified}
    crop_results: list[CropResult] = []
    staged: list[StagedVector] = []
    for idx, (box, sub) in enumerate(kept):
        crop = image.crop(box.x, box.y, box.w, box.h)
        tags = tag_lookup.get(id(box))
        if tags is None:
            try:
                tags = plugins.tagger(crop)
            except Exception as exc:
                tags = frozenset()
                errors.append(f"fallback crop tagger: {exc}")
        try:
            vector = np.asarray(plugins.embedder(crop), dtype=np.float64)
        except Exception as exc:
            errors.append(f"crop {idx} embedder: {exc}")
            crop_results.append(CropResult(idx, box, sub, tags, None, str(exc)))
            continue
        crop_results.append(CropResult(idx, box, sub, tags, vector))
        staged.append(StagedVector(hierarchy.super_of(sub), idx, vector))
    return OotdAnalysis(tuple(crop_results), tuple(staged), tuple(errors))


def _guard(fn, arg):
    try:
        return fn(arg), None
    except Exception as exc:
        return None, exc


# ---------------------------------------------------------------------------
# Stub plugins: desk-scale stand-ins for the CNN stages
# ---------------------------------------------------------------------------


@dataclass
class StubCatalog:
    """Content-signature lookup for metadata-driven stubs. Signatures are
    average hashes of the exact crop content."""

    entries: dict[int, tuple[str, Tags]] = field(default_factory=dict)

    def register(self, image: RasterImage, sub_category: str, tags: Tags = frozenset()) -> int:
        sig = average_hash(image)
        self.entries[sig] = (sub_category, tags)
        return sig

    def lookup(self, image: RasterImage) -> tuple[str, Tags] | None:
        return self.entries.get(average_hash(image))


def _pixel_stats(image: RasterImage, grid: int = 4) -> np.ndarray:
    """Deterministic content features: per-cell channel means and stds."""
    px = image.pixels.astype(np.float64)
    h, w, _ = px.shape
    ys = np.linspace(0, h, grid + 1).astype(int)
    xs = np.linspace(0, w, grid + 1).astype(int)
    feats = []
    for i in range(grid):
        for j in range(grid):
            cell = px[ys[i] : max(ys[i + 1], ys[i] + 1), xs[j] : max(xs[j + 1], xs[j] + 1)]
            feats.extend(cell.mean(axis=(0, 1)) / 255.0)
            feats.extend(cell.std(axis=(0, 1)) / 255.0)
    return np.array(feats)


def stub_plugins(
    seed: int,
    hierarchy: CategoryHierarchy,
    catalog: StubCatalog | None = None,
    embedding_dim: int = 128,
    min_gap_rows: int = 8,
    uniformity_tol: int = 2,
) -> PluginSet:
    """Deterministic model-stage stand-ins.

    - detector: full-width boxes over the non-uniform row bands of the image
      (whole image when nothing splits), super-category from the classifier;
    - classifier/tagger: catalog lookup by content signature, falling back
      to a signature-derived pseudo-label;
    - embedder: seeded random projection of pixel statistics to a unit
      vector.
    """
    catalog = catalog or StubCatalog()
    rng = np.random.default_rng(seed)
    n_feats = 4 * 4 * 6
    projection = rng.normal(size=(embedding_dim, n_feats))

    def classifier(crop: RasterImage) -> tuple[str, float]:
        hit = catalog.lookup(crop)
        if hit is not None:
            return hit[0], 0.99
        sig = average_hash(crop)
        subs = hierarchy.sub_categories
        return subs[sig % len(subs)], 0.5

    def tagger(crop: RasterImage) -> Tags:
        hit = catalog.lookup(crop)
        if hit is not None:
            return hit[1]
        return frozenset()

    def detector(image: RasterImage) -> list[BoundingBox]:
        segments = split_descriptive_image(image, min_gap_rows, uniformity_tol)
        offsets = _segment_offsets(image, min_gap_rows, uniformity_tol)
        boxes: list[BoundingBox] = []
        for seg, (y0, y1) in zip(segments, offsets):
            sub, conf = classifier(seg)
            boxes.append(
                BoundingBox(0, y0, image.width, y1 - y0, hierarchy.super_of(sub), 0.9 * conf + 0.05)
            )
        if not boxes:
            sub, conf = classifier(image)
            boxes = [
                BoundingBox(0, 0, image.width, image.height, hierarchy.super_of(sub), 0.5)
            ]
        return boxes

    def embedder(crop: RasterImage) -> np.ndarray:
        feats = _pixel_stats(crop)
        vec = projection @ feats
        norm = np.linalg.norm(vec)
        if norm == 0:
            vec = projection[:, 0].copy()
            norm = np.linalg.norm(vec)
        return vec / norm

    return PluginSet(detector, classifier, tagger, embedder)


def _segment_offsets(
    image: RasterImage, min_gap_rows: int, uniformity_tol: int
) -> list[tuple[int, int]]:
    """Row ranges of the content bands found by the descriptive-image split."""
    from .imaging import _uniform_rows

    uniform = _uniform_rows(image, uniformity_tol)
    separator = np.zeros(image.height, dtype=bool)
    run_start = None
    for i in range(image.height + 1):
        in_run = i < image.height and uniform[i]
        if in_run and run_start is None:
            run_start = i
        elif not in_run and run_start is not None:
            if i - run_start >= min_gap_rows:
                separator[run_start:i] = True
            run_start = None
    ranges: list[tuple[int, int]] = []
    start = None
    for i in range(image.height + 1):
        content = i < image.height and not separator[i]
        if content and start is None:
            start = i
        elif not content and start is not None:
            ranges.append((start, i))
            start = None
    return ranges
