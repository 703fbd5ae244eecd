"""Tour of the mask and score-field primitives.

Run:  python demos/01_masks_and_fields.py
"""
import numpy as np

from maskpost import (
    BBox,
    ScoreField,
    bilinear_sample,
    binarize,
    box_iou,
    mask_iou,
    rle_decode,
    rle_encode,
    rle_string_encode,
    size_bucket,
)


def show(mask):
    for row in mask:
        print("   " + "".join("#" if v else "." for v in row))


# --- a binary mask and its run-length encoding -----------------------------
print("A 6x8 blob, encoded column-major the way COCO stores masks:")
mask = np.zeros((6, 8), dtype=bool)
mask[1:5, 2:6] = True
mask[2:4, 4] = False  # poke a hole
show(mask)

rle = rle_encode(mask)
print("runs:", rle.counts.tolist())
print("wire string:", repr(rle_string_encode(rle)))
print("round trip intact:", np.array_equal(rle_decode(rle), mask))
print("foreground area:", rle.area, "px")

# --- overlap measures -------------------------------------------------------
other = np.zeros((6, 8), dtype=bool)
other[2:6, 3:7] = True
print("\nmask IoU with a shifted blob:", round(mask_iou(mask, other), 4))
print("box IoU of the tight boxes:  ",
      round(box_iou(BBox(2, 1, 4, 4), BBox(3, 2, 4, 4)), 4))

# --- score fields and continuous sampling -----------------------------------
# logit 0 is the decision boundary (foreground probability one half)
print("\nA 2x2 score field sampled off-grid (align-corners convention):")
field = ScoreField.from_flat(2, 2, [0.0, 0.0, 0.0, 4.0])
for p in [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.25, 0.75)]:
    print(f"   sample{p} = {bilinear_sample(field, p):.3f}")
print("binarized:", binarize(field).astype(int).tolist())

# --- instance size buckets ---------------------------------------------------
print("\nSize buckets (splits at 113^2 and 256^2 px, boundaries are medium):")
for side in (100, 113, 150, 256, 300):
    print(f"   {side}x{side} -> {size_bucket(side * side).value}")
