"""Independent brute-force references the library is checked against.

Everything here is deliberately written as plain Python loops over the
definitions: matching, PR-curve interpolation, classic NMS, the compressed
RLE byte format, and mask handling via index sets. No code is shared with
the library's own computation paths.
"""
from __future__ import annotations


# ---------------------------------------------------------------------------
# Mask helpers (column-major pixel index sets, decoded straight from counts)
# ---------------------------------------------------------------------------

def rle_pixel_set(rle) -> frozenset[int]:
    """Foreground pixel indices (column-major) expanded by looping the runs."""
    pixels = []
    pos = 0
    fg = False
    for count in rle.counts.tolist():
        if fg:
            pixels.extend(range(pos, pos + count))
        pos += count
        fg = not fg
    return frozenset(pixels)


def set_iou(a: frozenset[int], b: frozenset[int]) -> float:
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def rect_iou(a, b) -> float:
    """Box IoU with the same arithmetic as the library contract."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# Average precision (explicit prefix scan over the 101 recall points)
# ---------------------------------------------------------------------------

def ap_bruteforce(scores, tp_flags, n_gt, recall_points) -> float:
    if n_gt == 0:
        return -1.0
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    flags = [tp_flags[i] for i in order]
    precisions, recalls = [], []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    total = 0.0
    for r in recall_points:
        best = 0.0
        for prec, rec in zip(precisions, recalls):
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / len(recall_points)


# ---------------------------------------------------------------------------
# Full evaluator
# ---------------------------------------------------------------------------

def evaluate_bruteforce(gts, dets, cfg) -> dict:
    """Reference evaluator; mirrors the metric definition, not the library code.

    Returns a dict with mAP/AP50/AP75/APs/APm/APl and per_category.
    """
    thresholds = list(cfg.iou_thresholds)
    recall_points = list(cfg.recall_points)
    t1, t2 = cfg.bucket_thresholds
    cats = sorted({g.category_id for g in gts})
    cat_set = set(cats)

    gt_pix = {id(g): rle_pixel_set(g.mask) for g in gts}
    det_pix = {id(d): rle_pixel_set(d.mask) for d in dets if d.mask is not None}

    def bucket(area):
        if area < t1 * t1:
            return "s"
        if area <= t2 * t2:
            return "m"
        return "l"

    gt_bucket = {id(g): bucket(g.area) for g in gts}
    det_area = {
        id(d): (len(det_pix[id(d)]) if d.mask is not None else d.bbox.w * d.bbox.h)
        for d in dets
    }
    det_bucket = {id(d): bucket(det_area[id(d)]) for d in dets}

    def iou(det, gt):
        if cfg.iou_on == "mask":
            return set_iou(det_pix[id(det)], gt_pix[id(gt)])
        return rect_iou(det.bbox, gt.bbox)

    gt_groups, det_groups = {}, {}
    for g in gts:
        gt_groups.setdefault((g.image_id, g.category_id), []).append(g)
    for idx, d in enumerate(dets):
        if d.category_id not in cat_set:
            continue
        det_groups.setdefault((d.image_id, d.category_id), []).append((d.score, idx, d))
    for key in det_groups:
        det_groups[key] = sorted(det_groups[key], key=lambda r: (-r[0], r[1]))
        det_groups[key] = det_groups[key][: cfg.max_detections_per_image]

    n_gt_all = {c: 0 for c in cats}
    n_gt_bucket = {(c, b): 0 for c in cats for b in "sml"}
    for g in gts:
        n_gt_all[g.category_id] += 1
        n_gt_bucket[(g.category_id, gt_bucket[id(g)])] += 1

    ap_cells = {}
    for cat in cats:
        keys = sorted(k for k in set(gt_groups) | set(det_groups) if k[1] == cat)
        pooled = []
        for key in keys:
            for score, idx, d in det_groups.get(key, []):
                pooled.append((score, key[0], idx, d))
        pooled.sort(key=lambda r: (-r[0], r[1], r[2]))
        for thr in thresholds:
            match_of = {}
            for key in keys:
                group_gts = gt_groups.get(key, [])
                taken = [False] * len(group_gts)
                for score, idx, d in det_groups.get(key, []):
                    best, best_iou = -1, thr
                    for g_i, g in enumerate(group_gts):
                        if taken[g_i]:
                            continue
                        value = iou(d, g)
                        if value > best_iou or (best == -1 and value >= thr):
                            best, best_iou = g_i, value
                    if best >= 0:
                        taken[best] = True
                        match_of[idx] = group_gts[best]
                    else:
                        match_of[idx] = None
            scores = [r[0] for r in pooled]
            flags = [match_of[r[2]] is not None for r in pooled]
            ap_cells[(cat, thr, None)] = ap_bruteforce(scores, flags, n_gt_all[cat], recall_points)
            for b in "sml":
                sel_scores, sel_flags = [], []
                for score, _, idx, d in pooled:
                    matched = match_of[idx]
                    if matched is not None:
                        if gt_bucket[id(matched)] == b:
                            sel_scores.append(score)
                            sel_flags.append(True)
                    elif det_bucket[id(d)] == b:
                        sel_scores.append(score)
                        sel_flags.append(False)
                ap_cells[(cat, thr, b)] = ap_bruteforce(
                    sel_scores, sel_flags, n_gt_bucket[(cat, b)], recall_points
                )

    def mean(values):
        values = list(values)
        return sum(values) / len(values) if values else -1.0

    result = {
        "mAP": mean(ap_cells[(c, t, None)] for c in cats for t in thresholds),
        "AP50": mean(ap_cells[(c, 0.50, None)] for c in cats) if 0.50 in thresholds else -1.0,
        "AP75": mean(ap_cells[(c, 0.75, None)] for c in cats) if 0.75 in thresholds else -1.0,
        "per_category": {c: mean(ap_cells[(c, t, None)] for t in thresholds) for c in cats},
    }
    for name, b in (("APs", "s"), ("APm", "m"), ("APl", "l")):
        cells = [
            ap_cells[(c, t, b)]
            for c in cats
            for t in thresholds
            if n_gt_bucket[(c, b)] > 0
        ]
        result[name] = mean(cells)
    return result


# ---------------------------------------------------------------------------
# Classic (hard) NMS
# ---------------------------------------------------------------------------

def classic_nms(dets, iou_threshold) -> list:
    """Greedy suppression: keep the best, drop everything overlapping it
    strictly beyond the threshold, repeat. Returns surviving detections in
    keep order."""
    remaining = sorted(dets, key=lambda d: (-d.score, d.source_model or ""))
    kept = []
    while remaining:
        best = remaining.pop(0)
        kept.append(best)
        remaining = [d for d in remaining if rect_iou(best.bbox, d.bbox) <= iou_threshold]
    return kept


# ---------------------------------------------------------------------------
# Compressed RLE byte format (transliteration of the de-facto convention:
# 5-bit little-endian chunks, bit 0x20 continues, ASCII offset 48, counts
# past index 2 stored as deltas from two entries back)
# ---------------------------------------------------------------------------

def rle_counts_to_string(counts) -> str:
    out = []
    counts = list(counts)
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def rle_string_to_counts(s: str) -> list[int]:
    counts = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def shoelace_area(vertices) -> float:
    total = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0
