"""COCO-style mask AP, step by step.

Builds a four-image ground truth with categories and sizes mixed, then
scores a detection set that makes every classic mistake: a duplicate, a
misplaced box, a missed instance, and a wrong category.

Run:  python demos/04_ap_evaluation.py
"""
import numpy as np

from maskpost import (
    Detection,
    EvalConfig,
    GroundTruthInstance,
    average_precision,
    evaluate,
    mask_bbox,
    rle_encode,
)


def block(r0, c0, side, canvas=160):
    bits = np.zeros((canvas, canvas), dtype=bool)
    bits[r0 : r0 + side, c0 : c0 + side] = True
    return bits


def gt(image_id, category_id, bits):
    return GroundTruthInstance(image_id, category_id, rle_encode(bits), mask_bbox(bits))


def det(image_id, category_id, score, bits):
    return Detection(image_id, category_id, score, mask_bbox(bits), rle_encode(bits))


# two categories; areas straddle the small/medium bucket split (113^2 px)
truth = [
    gt(1, 1, block(10, 10, 40)),    # small (1600 px)
    gt(2, 1, block(10, 10, 120)),   # medium (14400 px)
    gt(3, 2, block(20, 20, 40)),
    gt(4, 2, block(30, 30, 50)),
]

detections = [
    det(1, 1, 0.95, block(10, 10, 40)),    # clean hit
    det(1, 1, 0.40, block(10, 10, 40)),    # duplicate -> false positive
    det(2, 1, 0.85, block(14, 14, 120)),   # slightly off, still > 0.5 IoU
    det(3, 2, 0.70, block(90, 90, 40)),    # mislocated -> false positive
    det(4, 3, 0.60, block(30, 30, 50)),    # category with no ground truth
    # the instance on image 4 is simply missed
]

report = evaluate(truth, detections, EvalConfig())
print(report.to_text())

# --- what the interpolated AP of a single ranking looks like ----------------
print("a single PR curve, by hand: ranked [TP, FP, TP] against 3 truths")
ap = average_precision([0.9, 0.8, 0.7], [True, False, True], 3)
print(f"   101-point interpolated AP = {ap:.4f}")
print("   (precision 1 at recall 1/3, 2/3 at recall 2/3, undefined past max recall)")
