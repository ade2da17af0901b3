"""Raster images and the crawl-cleanup primitives that operate on them:
descriptive-image splitting, 64-bit average hashing, and near-duplicate
removal."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB image, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] == 0 or px.shape[1] == 0:
            raise ContractViolation(f"expected (h, w, 3) uint8 pixels, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_buffer(cls, width: int, height: int, buf: bytes) -> "RasterImage":
        if width * height <= 0:
            raise ContractViolation("width*height must be positive")
        if len(buf) != 3 * width * height:
            raise ContractViolation(
                f"buffer length {len(buf)} != 3*{width}*{height}"
            )
        px = np.frombuffer(buf, dtype=np.uint8).reshape(height, width, 3)
        return cls(px.copy())

    def to_buffer(self) -> bytes:
        return self.pixels.tobytes()

    def crop(self, x: int, y: int, w: int, h: int) -> "RasterImage":
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > self.width or y + h > self.height:
            raise ContractViolation(f"crop ({x},{y},{w},{h}) outside {self.width}x{self.height}")
        return RasterImage(self.pixels[y : y + h, x : x + w].copy())


def _uniform_rows(img: RasterImage, tol: int) -> np.ndarray:
    """Boolean mask of near-uniform rows: every channel value within ``tol``
    of that row's per-channel mean."""
    px = img.pixels.astype(np.float64)
    row_means = px.mean(axis=1, keepdims=True)
    max_dev = np.abs(px - row_means).max(axis=(1, 2))
    return max_dev <= tol


def split_descriptive_image(
    img: RasterImage, min_gap_rows: int, uniformity_tol: int
) -> list[RasterImage]:
    """Cut a crawled descriptive image into its stacked photo segments.

    A separator is a run of at least ``min_gap_rows`` near-uniform rows.
    Segments are the maximal row bands between separators, in top-to-bottom
    order; their heights plus the separator gaps cover the original height.
    No separator found -> the image itself; all rows uniform -> no segments.
    """
    if min_gap_rows < 1:
        raise ContractViolation("min_gap_rows must be >= 1")
    uniform = _uniform_rows(img, uniformity_tol)

    # Mark rows that belong to a separator run of sufficient length.
    separator = np.zeros(img.height, dtype=bool)
    run_start = None
    for i in range(img.height + 1):
        in_run = i < img.height and uniform[i]
        if in_run and run_start is None:
            run_start = i
        elif not in_run and run_start is not None:
            if i - run_start >= min_gap_rows:
                separator[run_start:i] = True
            run_start = None

    segments: list[RasterImage] = []
    start = None
    for i in range(img.height + 1):
        content = i < img.height and not separator[i]
        if content and start is None:
            start = i
        elif not content and start is not None:
            segments.append(RasterImage(img.pixels[start:i].copy()))
            start = None
    return segments


def _box_downsample(gray: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact area-average downsample via an interpolated integral image."""
    h, w = gray.shape
    integral = np.zeros((h + 1, w + 1), dtype=np.float64)
    integral[1:, 1:] = gray.cumsum(axis=0).cumsum(axis=1)

    def sample(coords: np.ndarray, axis_len: int, table: np.ndarray, axis: int) -> np.ndarray:
        lo = np.floor(coords).astype(int)
        frac = coords - lo
        hi = np.minimum(lo + 1, axis_len)
        if axis == 0:
            return table[lo] * (1 - frac)[:, None] + table[hi] * frac[:, None]
        return table[:, lo] * (1 - frac)[None, :] + table[:, hi] * frac[None, :]

    ys = np.linspace(0, h, out_h + 1)
    xs = np.linspace(0, w, out_w + 1)
    rows = sample(ys, h, integral, axis=0)
    grid = sample(xs, w, rows, axis=1)
    sums = grid[1:, 1:] - grid[:-1, 1:] - grid[1:, :-1] + grid[:-1, :-1]
    areas = np.outer(np.diff(ys), np.diff(xs))
    return sums / areas


def average_hash(img: RasterImage) -> int:
    """64-bit average hash: grayscale, 8x8 area-average, bit=1 iff cell >=
    the mean of the 64 cells, packed row-major MSB-first."""
    gray = img.pixels.astype(np.float64) @ GRAY_WEIGHTS
    # quantize away integral-image rounding (~1e-11 on a 0..255 scale) so
    # exact ties, e.g. a uniform image, resolve to 1 deterministically
    cells = np.round(_box_downsample(gray, 8, 8), 6)
    mean = cells.mean()
    bits = (cells >= mean - 1e-9).astype(np.uint64).ravel()
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def hamming_distance(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def dedup_hashes(hashes: Sequence[int], hamming_threshold: int) -> list[int]:
    """Greedy first-seen-wins scan over precomputed hashes; returns kept
    indices. An entry is dropped iff it is within ``hamming_threshold`` of an
    already-kept hash."""
    if not 0 <= hamming_threshold <= 64:
        raise ContractViolation(f"hamming_threshold must be in [0, 64], got {hamming_threshold}")
    kept: list[int] = []
    kept_hashes: list[int] = []
    for i, h in enumerate(hashes):
        if any(hamming_distance(h, k) <= hamming_threshold for k in kept_hashes):
            continue
        kept.append(i)
        kept_hashes.append(h)
    return kept


def dedup(images: Sequence[RasterImage], hamming_threshold: int) -> list[int]:
    """Near-duplicate removal over images by average hash; returns kept indices."""
    return dedup_hashes([average_hash(img) for img in images], hamming_threshold)
