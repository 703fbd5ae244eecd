"""COCO-style average precision over masks or boxes, with size buckets.

AP is the mean of interpolated precision sampled at 101 evenly spaced recall
points, averaged over IoU thresholds 0.50:0.05:0.95 and over categories.
The small/medium/large breakdowns restrict ground truth and detections to
one size bucket; bucket membership uses mask pixel area (a matched
detection inherits its ground truth's bucket, an unmatched one is bucketed
by its own area).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import BBox, RleMask, SizeBucket, box_iou, mask_iou, rle_decode, size_bucket
from .fusion import Detection

__all__ = [
    "GroundTruthInstance",
    "EvalConfig",
    "MetricReport",
    "match_detections",
    "average_precision",
    "evaluate",
]

UNDEFINED = -1.0  # sentinel for metrics with no ground truth to measure against

DEFAULT_IOU_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
DEFAULT_RECALL_POINTS = tuple(i / 100 for i in range(101))


@dataclass(frozen=True)
class GroundTruthInstance:
    """An annotated instance. ``area`` is the mask's foreground pixel count
    and is derived from the mask when not supplied."""

    image_id: int
    category_id: int
    mask: RleMask
    bbox: BBox
    area: int | None = None

    def __post_init__(self) -> None:
        pixels = self.mask.area
        if self.area is None:
            object.__setattr__(self, "area", pixels)
        elif self.area != pixels:
            raise ValueError(
                f"area {self.area} does not match mask foreground count {pixels}"
            )


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_points: tuple[float, ...] = DEFAULT_RECALL_POINTS
    bucket_thresholds: tuple[float, float] = (113, 256)
    max_detections_per_image: int = 100
    iou_on: str = "mask"

    def __post_init__(self) -> None:
        thr = self.iou_thresholds
        if not thr or any(t <= 0 or t > 1 for t in thr):
            raise ValueError("iou_thresholds must lie in (0, 1]")
        if any(b >= a for a, b in zip(thr[1:], thr)):
            raise ValueError("iou_thresholds must be strictly increasing")
        if self.iou_on not in ("mask", "bbox"):
            raise ValueError(f"iou_on must be 'mask' or 'bbox', got {self.iou_on!r}")


@dataclass
class MetricReport:
    """The metric table: overall mAP, the two fixed-threshold APs, and the
    size-bucket breakdowns. Undefined entries hold the -1 sentinel."""

    map: float
    ap50: float
    ap75: float
    ap_small: float
    ap_medium: float
    ap_large: float
    per_category: dict[int, float] = field(default_factory=dict)
    skipped_categories: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "mAP": self.map,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "APs": self.ap_small,
            "APm": self.ap_medium,
            "APl": self.ap_large,
            "per_category": {str(k): v for k, v in sorted(self.per_category.items())},
            "skipped_categories": list(self.skipped_categories),
        }

    def to_text(self) -> str:
        lines = [
            f"mAP    {self.map:.6f}",
            f"AP50   {self.ap50:.6f}",
            f"AP75   {self.ap75:.6f}",
            f"APs    {self.ap_small:.6f}",
            f"APm    {self.ap_medium:.6f}",
            f"APl    {self.ap_large:.6f}",
        ]
        for cat in sorted(self.per_category):
            lines.append(f"AP[category {cat}]  {self.per_category[cat]:.6f}")
        if self.skipped_categories:
            noted = ", ".join(str(c) for c in self.skipped_categories)
            lines.append(f"categories without ground truth (excluded): {noted}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def match_detections(ious: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Greedy detection-to-ground-truth assignment.

    ``ious`` has one row per detection (rows ordered by descending score)
    and one column per ground truth. Each detection takes the still
    unmatched ground truth with the highest IoU at or above the threshold
    (ties toward the lowest index); the rest are false positives. Returns
    the matched column per row, -1 where unmatched.
    """
    ious = np.asarray(ious, dtype=np.float64)
    n_det, n_gt = ious.shape
    matches = np.full(n_det, -1, dtype=np.int64)
    taken = np.zeros(n_gt, dtype=bool)
    for d in range(n_det):
        best, best_iou = -1, iou_threshold
        for g in range(n_gt):
            if taken[g]:
                continue
            if ious[d, g] > best_iou or (best == -1 and ious[d, g] >= iou_threshold):
                best, best_iou = g, ious[d, g]
        if best >= 0:
            matches[d] = best
            taken[best] = True
    return matches


def average_precision(scores, tp_flags, n_gt: int, recall_points=DEFAULT_RECALL_POINTS) -> float:
    """Interpolated AP from per-detection labels.

    Detections are ranked by descending score (stable on ties); interpolated
    precision at recall r is the maximum precision at any recall >= r, and
    AP averages it over the recall points. With no ground truth the metric
    is undefined and the -1 sentinel is returned.
    """
    if n_gt == 0:
        return UNDEFINED
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(tp_flags, dtype=bool)
    if scores.shape != flags.shape:
        raise ValueError("scores and tp_flags must have identical shapes")
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    flags = flags[order]
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    best_ahead = np.maximum.accumulate(precision[::-1])[::-1]
    pts = np.asarray(recall_points, dtype=np.float64)
    idx = np.searchsorted(recall, pts, side="left")
    sampled = np.where(idx < recall.size, best_ahead[np.minimum(idx, recall.size - 1)], 0.0)
    return float(sampled.mean())


def _pairwise_ious(gts, dets, iou_on, mask_cache):
    n_det, n_gt = len(dets), len(gts)
    ious = np.zeros((n_det, n_gt))
    for d, det in enumerate(dets):
        for g, gt in enumerate(gts):
            if iou_on == "mask":
                ious[d, g] = mask_iou(mask_cache[id(det)], mask_cache[id(gt)])
            else:
                ious[d, g] = box_iou(det.bbox, gt.bbox)
    return ious


def _detection_area(det: Detection, mask_cache) -> float:
    """Bucket area of a detection: mask pixels when available, box area otherwise."""
    if det.mask is not None:
        return float(np.count_nonzero(mask_cache[id(det)]))
    return det.bbox.area


def evaluate(
    gts: list[GroundTruthInstance],
    dets: list[Detection],
    cfg: EvalConfig | None = None,
    workers: int = 1,
) -> MetricReport:
    """Score detections against ground truth.

    Matching is greedy per image, category and IoU threshold; AP is computed
    per (category, threshold) pooling detections across images, and the
    report aggregates means over categories and thresholds. Categories with
    no ground truth are excluded from every mean and listed in the report.
    Deterministic: detections are ordered internally by score (ties by input
    position), so the result does not depend on input order or ``workers``.
    """
    cfg = cfg or EvalConfig()
    if len({id(d) for d in dets}) != len(dets):
        raise ValueError("duplicate detection objects in input")

    cats = sorted({g.category_id for g in gts})
    cat_set = set(cats)
    skipped = tuple(sorted({d.category_id for d in dets} - cat_set))

    mask_cache: dict[int, np.ndarray] = {}
    if cfg.iou_on == "mask":
        for gt in gts:
            mask_cache[id(gt)] = rle_decode(gt.mask)
    for det in dets:
        if det.mask is not None:
            mask_cache[id(det)] = rle_decode(det.mask)
        elif cfg.iou_on == "mask":
            raise ValueError("mask IoU requested but a detection has no mask")

    gt_groups: dict[tuple[int, int], list[GroundTruthInstance]] = {}
    for gt in gts:
        gt_groups.setdefault((gt.image_id, gt.category_id), []).append(gt)
    det_groups: dict[tuple[int, int], list[tuple[float, int, Detection]]] = {}
    for idx, det in enumerate(dets):
        if det.category_id not in cat_set:
            continue
        det_groups.setdefault((det.image_id, det.category_id), []).append(
            (det.score, idx, det)
        )
    for key, recs in det_groups.items():
        recs.sort(key=lambda r: (-r[0], r[1]))
        del recs[cfg.max_detections_per_image :]

    pair_keys = sorted(set(gt_groups) | set(det_groups))

    def _matrix(key):
        group_gts = gt_groups.get(key, [])
        group_dets = [r[2] for r in det_groups.get(key, [])]
        return _pairwise_ious(group_gts, group_dets, cfg.iou_on, mask_cache)

    if workers > 1 and len(pair_keys) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            matrices = dict(zip(pair_keys, pool.map(_matrix, pair_keys)))
    else:
        matrices = {key: _matrix(key) for key in pair_keys}

    gt_bucket = {
        id(gt): size_bucket(gt.area, cfg.bucket_thresholds) for gt in gts
    }
    det_bucket = {
        id(det): size_bucket(_detection_area(det, mask_cache), cfg.bucket_thresholds)
        for det in dets
    }

    buckets = (SizeBucket.SMALL, SizeBucket.MEDIUM, SizeBucket.LARGE)
    n_gt_all = {c: 0 for c in cats}
    n_gt_bucket = {(c, b): 0 for c in cats for b in buckets}
    for gt in gts:
        n_gt_all[gt.category_id] += 1
        n_gt_bucket[(gt.category_id, gt_bucket[id(gt)])] += 1

    # AP per (category, threshold, restriction); restriction None == all sizes
    ap: dict[tuple[int, int, SizeBucket | None], float] = {}
    for cat in cats:
        keys = [k for k in pair_keys if k[1] == cat]
        # pooled detection order: score descending, ties by image then input position
        pooled: list[tuple[float, int, int, Detection, int]] = []
        for key in keys:
            for rank, (score, idx, det) in enumerate(det_groups.get(key, [])):
                pooled.append((score, key[0], idx, det, rank))
        pooled.sort(key=lambda r: (-r[0], r[1], r[2]))
        for t_idx, thr in enumerate(cfg.iou_thresholds):
            matched_gt: dict[int, GroundTruthInstance | None] = {}
            for key in keys:
                group_gts = gt_groups.get(key, [])
                group = det_groups.get(key, [])
                matches = match_detections(matrices[key], thr)
                for rank, (_, idx, _) in enumerate(group):
                    g = matches[rank] if rank < matches.shape[0] else -1
                    matched_gt[idx] = group_gts[g] if g >= 0 else None
            scores = np.array([r[0] for r in pooled])
            flags = np.array([matched_gt[r[2]] is not None for r in pooled], dtype=bool)
            ap[(cat, t_idx, None)] = average_precision(
                scores, flags, n_gt_all[cat], cfg.recall_points
            )
            for bucket in buckets:
                sel_scores, sel_flags = [], []
                for score, _, idx, det, _ in pooled:
                    gt = matched_gt[idx]
                    if gt is not None:
                        if gt_bucket[id(gt)] is bucket:
                            sel_scores.append(score)
                            sel_flags.append(True)
                    elif det_bucket[id(det)] is bucket:
                        sel_scores.append(score)
                        sel_flags.append(False)
                ap[(cat, t_idx, bucket)] = average_precision(
                    np.array(sel_scores),
                    np.array(sel_flags, dtype=bool),
                    n_gt_bucket[(cat, bucket)],
                    cfg.recall_points,
                )

    n_thr = len(cfg.iou_thresholds)

    def _mean(values):
        return float(np.mean(values)) if values else UNDEFINED

    map_all = _mean([ap[(c, t, None)] for c in cats for t in range(n_thr)])
    ap50 = (
        _mean([ap[(c, cfg.iou_thresholds.index(0.50), None)] for c in cats])
        if 0.50 in cfg.iou_thresholds
        else UNDEFINED
    )
    ap75 = (
        _mean([ap[(c, cfg.iou_thresholds.index(0.75), None)] for c in cats])
        if 0.75 in cfg.iou_thresholds
        else UNDEFINED
    )
    by_bucket = {}
    for bucket in buckets:
        cells = [
            ap[(c, t, bucket)]
            for c in cats
            for t in range(n_thr)
            if n_gt_bucket[(c, bucket)] > 0
        ]
        by_bucket[bucket] = _mean(cells)
    per_category = {
        c: _mean([ap[(c, t, None)] for t in range(n_thr)]) for c in cats
    }
    return MetricReport(
        map=map_all,
        ap50=ap50,
        ap75=ap75,
        ap_small=by_bucket[SizeBucket.SMALL],
        ap_medium=by_bucket[SizeBucket.MEDIUM],
        ap_large=by_bucket[SizeBucket.LARGE],
        per_category=per_category,
        skipped_categories=skipped,
    )
