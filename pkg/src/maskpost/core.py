"""Mask, box and score-field primitives shared by the rendering, fusion and
evaluation stages.

Binary masks are plain boolean numpy arrays of shape ``(height, width)``.
Run-length encoded masks use the COCO column-major layout. Score fields hold
mask logits (logit 0 corresponds to foreground probability 0.5) and support
continuous bilinear sampling over the closed unit square.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "SMALL_MEDIUM_SIDE",
    "MEDIUM_LARGE_SIDE",
    "DomainError",
    "BBox",
    "SizeBucket",
    "ScoreField",
    "RleMask",
    "bilinear_sample",
    "sample_points",
    "resample",
    "binarize",
    "rle_encode",
    "rle_decode",
    "mask_iou",
    "box_iou",
    "mask_bbox",
    "size_bucket",
]

# Side (sqrt-area) thresholds of the instance size buckets, in pixels.
SMALL_MEDIUM_SIDE = 113
MEDIUM_LARGE_SIDE = 256


class DomainError(ValueError):
    """A sample coordinate left the closed unit square."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in COCO layout: top-left corner plus width/height, pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box sides must be non-negative, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def sqrt_area(self) -> float:
        return math.sqrt(self.w * self.h)

    def to_list(self) -> list[float]:
        return [float(self.x), float(self.y), float(self.w), float(self.h)]


class SizeBucket(Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


def size_bucket(
    area: float,
    thresholds: tuple[float, float] = (SMALL_MEDIUM_SIDE, MEDIUM_LARGE_SIDE),
) -> SizeBucket:
    """Classify an instance area (px^2) as small, medium or large.

    ``thresholds`` are the side lengths of the two split points; the medium
    bucket is closed on both ends, so areas of exactly ``t1**2`` or ``t2**2``
    are medium.
    """
    if area < 0:
        raise ValueError(f"area must be non-negative, got {area}")
    t1, t2 = thresholds
    if area < t1 * t1:
        return SizeBucket.SMALL
    if area <= t2 * t2:
        return SizeBucket.MEDIUM
    return SizeBucket.LARGE


class ScoreField:
    """Rectangular grid of mask logits with continuous-coordinate sampling.

    Sampling uses the align-corners convention: a point ``(u, v)`` in the
    closed unit square maps to pixel-center coordinates
    ``(u * (width - 1), v * (height - 1))``, so ``(0, 0)`` is the center of
    pixel (row 0, col 0) and ``(1, 1)`` the center of the bottom-right pixel.
    ``u`` runs along columns, ``v`` along rows. Instances are immutable and
    safe to share across threads.
    """

    __slots__ = ("logits",)

    def __init__(self, logits) -> None:
        arr = np.array(logits, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError("logits must be a non-empty 2-D array")
        if not np.isfinite(arr).all():
            raise ValueError("logits must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "logits", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ScoreField is immutable")

    @property
    def height(self) -> int:
        return self.logits.shape[0]

    @property
    def width(self) -> int:
        return self.logits.shape[1]

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "ScoreField":
        """Build from a row-major flat sequence of ``width * height`` logits."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} logits, got {arr.size}")
        return cls(arr.reshape(height, width))

    @classmethod
    def constant(cls, width: int, height: int, value: float = 0.0) -> "ScoreField":
        return cls(np.full((height, width), value, dtype=np.float64))

    def __repr__(self) -> str:
        return f"ScoreField({self.width}x{self.height})"


def sample_points(field: ScoreField, points) -> np.ndarray:
    """Bilinearly sample ``field`` at an ``(n, 2)`` array of unit-square points.

    Points are ``(u, v)`` pairs under the align-corners convention documented
    on :class:`ScoreField`. Queries landing exactly on a pixel center return
    that pixel's logit. Raises :class:`DomainError` for coordinates outside
    the closed unit square.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        bad = pts[((pts < 0.0) | (pts > 1.0)).any(axis=1)][0]
        raise DomainError(f"point ({bad[0]}, {bad[1]}) outside the unit square")
    v = field.logits
    h, w = v.shape
    gx = pts[:, 0] * (w - 1)
    gy = pts[:, 1] * (h - 1)
    x0 = np.clip(np.floor(gx).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(gy).astype(np.intp), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = gx - x0
    fy = gy - y0
    top = v[y0, x0] * (1.0 - fx) + v[y0, x1] * fx
    bot = v[y1, x0] * (1.0 - fx) + v[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_sample(field: ScoreField, point) -> float:
    """Sample one unit-square point; scalar convenience over :func:`sample_points`."""
    return float(sample_points(field, np.asarray(point, dtype=np.float64).reshape(1, 2))[0])


def resample(field: ScoreField, height: int, width: int) -> ScoreField:
    """Bilinearly resample a field onto a ``height x width`` align-corners grid."""
    if height < 1 or width < 1:
        raise ValueError("target dimensions must be positive")
    v = field.logits
    h, w = v.shape
    gx = (np.arange(width) / max(width - 1, 1)) * (w - 1)
    gy = (np.arange(height) / max(height - 1, 1)) * (h - 1)
    x0 = np.clip(np.floor(gx).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(gy).astype(np.intp), 0, max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = gx - x0
    fy = gy - y0
    cols = v[:, x0] * (1.0 - fx) + v[:, x1] * fx  # (h, width)
    out = cols[y0, :] * (1.0 - fy)[:, None] + cols[y1, :] * fy[:, None]
    return ScoreField(out)


def binarize(field: ScoreField, threshold: float = 0.0) -> np.ndarray:
    """Threshold a score field into a boolean mask; strictly greater-than."""
    return field.logits > threshold


class RleMask:
    """Column-major run-length encoded binary mask (COCO convention).

    ``counts`` alternate background/foreground runs over the column-major
    pixel sequence, starting with background; only the leading count may be
    zero, and the counts must sum to ``width * height``.
    """

    __slots__ = ("width", "height", "counts")

    def __init__(self, width: int, height: int, counts) -> None:
        if width < 1 or height < 1:
            raise ValueError("mask dimensions must be positive")
        arr = np.asarray(counts, dtype=np.int64).copy()
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("counts must be a non-empty 1-D sequence")
        if (arr < 0).any():
            raise ValueError("counts must be non-negative")
        if arr.size > 1 and (arr[1:] == 0).any():
            raise ValueError("zero-length run beyond the leading position")
        total = int(arr.sum())
        if total != width * height:
            raise ValueError(f"counts sum to {total}, expected {width * height}")
        arr.setflags(write=False)
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "counts", arr)

    def __setattr__(self, name, value):
        raise AttributeError("RleMask is immutable")

    @property
    def area(self) -> int:
        """Foreground pixel count."""
        return int(self.counts[1::2].sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RleMask):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.counts, other.counts)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"RleMask({self.width}x{self.height}, {self.counts.size} runs)"


def rle_encode(mask) -> RleMask:
    """Run-length encode a boolean ``(height, width)`` mask, column-major."""
    bits = np.asarray(mask)
    if bits.ndim != 2 or bits.size == 0:
        raise ValueError("mask must be a non-empty 2-D array")
    bits = bits.astype(bool, copy=False)
    h, w = bits.shape
    flat = bits.ravel(order="F")
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds)
    if flat[0]:
        counts = np.concatenate(([0], counts))
    return RleMask(w, h, counts)


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode back to a boolean ``(height, width)`` mask."""
    pattern = (np.arange(rle.counts.size) % 2).astype(bool)
    flat = np.repeat(pattern, rle.counts)
    return flat.reshape((rle.height, rle.width), order="F")


def mask_iou(a, b) -> float:
    """Intersection over union of two equally sized boolean masks.

    Two empty masks have IoU 0 by convention, keeping downstream AP math
    free of NaNs.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is degenerate."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def mask_bbox(mask) -> BBox:
    """Tight bounding box of a boolean mask; zero box for an empty mask."""
    bits = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        return BBox(0.0, 0.0, 0.0, 0.0)
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return BBox(float(x0), float(y0), float(x1 - x0 + 1), float(y1 - y0 + 1))
