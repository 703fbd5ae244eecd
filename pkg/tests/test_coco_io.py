import json
from pathlib import Path

import numpy as np
import pytest

from maskpost import (
    BBox,
    Detection,
    FieldInstance,
    RleMask,
    ScoreField,
    SchemaError,
    annotation_mask,
    dataset_ground_truth,
    load_dataset,
    load_field_archive,
    load_results,
    mask_bbox,
    median_sqrt_area,
    rasterize_polygon,
    rasterize_polygons,
    rle_decode,
    rle_encode,
    rle_string_decode,
    rle_string_encode,
    size_histogram,
    write_field_archive,
    write_results,
)
from oracles import rle_counts_to_string, rle_string_to_counts, shoelace_area

GOLDEN = json.loads((Path(__file__).parent / "data" / "rle_golden.json").read_text())


class TestRleStrings:
    def test_golden_fixtures_decode(self):
        for entry in GOLDEN:
            rle = rle_string_decode(entry["string"], entry["width"], entry["height"])
            assert rle.counts.tolist() == entry["counts"]

    def test_golden_fixtures_encode(self):
        for entry in GOLDEN:
            rle = RleMask(entry["width"], entry["height"], entry["counts"])
            assert rle_string_encode(rle) == entry["string"]

    def test_single_run(self):
        rle = RleMask(2, 2, [4])
        s = rle_string_encode(rle)
        assert rle_string_decode(s, 2, 2).counts.tolist() == [4]

    def test_one_pixel_foreground(self):
        rle = RleMask(1, 1, [0, 1])
        assert rle_string_decode(rle_string_encode(rle), 1, 1).counts.tolist() == [0, 1]

    def test_roundtrip_random(self):
        rng = np.random.default_rng(51)
        for _ in range(200):
            h = int(rng.integers(1, 50))
            w = int(rng.integers(1, 50))
            mask = rng.random((h, w)) < rng.uniform(0, 1)
            rle = rle_encode(mask)
            s = rle_string_encode(rle)
            back = rle_string_decode(s, w, h)
            assert back == rle
            # canonical strings survive the reverse direction too
            assert rle_string_encode(back) == s
            # and the transliterated reference agrees byte for byte
            assert rle_counts_to_string(rle.counts.tolist()) == s
            assert rle_string_to_counts(s) == rle.counts.tolist()

    def test_malformed_string_rejected(self):
        with pytest.raises(SchemaError):
            rle_string_decode("\x01", 2, 2)

    def test_wrong_size_rejected(self):
        with pytest.raises(SchemaError):
            rle_string_decode("4", 3, 3)  # decodes to [4], sum != 9


class TestRasterizePolygon:
    def test_axis_aligned_square(self):
        # square over [0,2]x[0,2] covers exactly pixels (0..1, 0..1)
        mask = rasterize_polygon([(0, 0), (2, 0), (2, 2), (0, 2)], 4, 4)
        expected = np.zeros((4, 4), dtype=bool)
        expected[0:2, 0:2] = True
        assert np.array_equal(mask, expected)

    def test_outside_image_empty(self):
        mask = rasterize_polygon([(10, 10), (12, 10), (12, 12), (10, 12)], 4, 4)
        assert not mask.any()

    def test_triangle_union_equals_square(self):
        square = rasterize_polygon([(0, 0), (4, 0), (4, 4), (0, 4)], 6, 6)
        tri_a = [(0, 0), (4, 0), (4, 4)]
        tri_b = [(0, 0), (4, 4), (0, 4)]
        union = rasterize_polygons([tri_a, tri_b], 6, 6)
        assert np.array_equal(union, square)

    def test_flat_coordinate_list_accepted(self):
        flat = [0, 0, 2, 0, 2, 2, 0, 2]
        pairs = [(0, 0), (2, 0), (2, 2), (0, 2)]
        assert np.array_equal(rasterize_polygon(flat, 4, 4), rasterize_polygon(pairs, 4, 4))

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            rasterize_polygon([(0, 0), (1, 1)], 4, 4)

    def test_area_close_to_analytic_for_convex_shapes(self):
        fixtures = [
            [(1, 1), (13, 1), (13, 9), (1, 9)],            # rectangle
            [(2, 2), (14, 2), (8, 12)],                     # triangle
            [(8, 1), (14, 5), (12, 13), (4, 13), (2, 5)],   # convex pentagon
        ]
        for verts in fixtures:
            mask = rasterize_polygon(verts, 16, 16)
            analytic = shoelace_area(verts)
            width = max(x for x, _ in verts) - min(x for x, _ in verts)
            height = max(y for _, y in verts) - min(y for _, y in verts)
            assert abs(int(mask.sum()) - analytic) <= max(width, height)

    def test_even_odd_hole(self):
        outer = [(0, 0), (8, 0), (8, 8), (0, 8)]
        inner = [(2, 2), (6, 2), (6, 6), (2, 6)]
        donut = rasterize_polygon(outer + inner[::-1], 10, 10)
        # even-odd: the inner square is a hole
        assert donut[1, 1] and not donut[4, 4]


class TestDatasetIo:
    @staticmethod
    def _dataset_dict():
        bits = np.zeros((8, 8), dtype=bool)
        bits[1:4, 1:4] = True
        rle = rle_encode(bits)
        return {
            "info": {"description": "ignored extra"},
            "images": [
                {"id": 1, "width": 8, "height": 8, "file_name": "a.png", "extra": 1},
                {"id": 2, "width": 8, "height": 8, "file_name": "b.png"},
            ],
            "annotations": [
                {
                    "id": 10,
                    "image_id": 1,
                    "category_id": 1,
                    "segmentation": {"size": [8, 8], "counts": rle_string_encode(rle)},
                    "bbox": [1, 1, 3, 3],
                    "area": 9,
                },
                {
                    "id": 11,
                    "image_id": 2,
                    "category_id": 2,
                    "segmentation": [[1, 1, 5, 1, 5, 5, 1, 5]],
                    "bbox": [1, 1, 4, 4],
                },
            ],
            "categories": [{"id": 1, "name": "chair"}, {"id": 2, "name": "table"}],
        }

    def test_load_and_ground_truth(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text(json.dumps(self._dataset_dict()))
        ds = load_dataset(path)
        assert [img.id for img in ds.images] == [1, 2]
        assert len(ds.categories) == 2
        gts = dataset_ground_truth(ds)
        assert len(gts) == 2
        assert gts[0].area == 9
        assert gts[1].area == 16  # 4x4 pixel block from the polygon

    def test_unknown_fields_ignored(self, tmp_path):
        data = self._dataset_dict()
        data["licenses"] = ["whatever"]
        data["annotations"][0]["mystery"] = {"deep": True}
        path = tmp_path / "gt.json"
        path.write_text(json.dumps(data))
        assert len(load_dataset(path).annotations) == 2

    def test_missing_image_reference(self, tmp_path):
        data = self._dataset_dict()
        data["annotations"][0]["image_id"] = 99
        path = tmp_path / "gt.json"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaError, match="99"):
            load_dataset(path)

    def test_out_of_bounds_bbox_warns(self, tmp_path):
        data = self._dataset_dict()
        data["annotations"][0]["bbox"] = [5, 5, 10, 10]
        path = tmp_path / "gt.json"
        path.write_text(json.dumps(data))
        with pytest.warns(UserWarning):
            load_dataset(path)

    def test_missing_file(self):
        with pytest.raises(SchemaError):
            load_dataset("/nonexistent/gt.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            load_dataset(path)


class TestResultsIo:
    @staticmethod
    def _dets():
        bits = np.zeros((6, 6), dtype=bool)
        bits[2:5, 2:5] = True
        return [
            Detection(
                image_id=1,
                category_id=3,
                score=0.75,
                bbox=BBox(2, 2, 3, 3),
                mask=rle_encode(bits),
            ),
            Detection(image_id=2, category_id=1, score=0.25, bbox=BBox(0, 0, 2, 2)),
        ]

    def test_roundtrip(self, tmp_path):
        path = tmp_path / "results.json"
        dets = self._dets()
        write_results(path, dets)
        loaded = load_results(path)
        assert len(loaded) == 2
        assert loaded[0].image_id == 1
        assert loaded[0].score == 0.75
        assert loaded[0].mask == dets[0].mask
        assert loaded[1].bbox == dets[1].bbox

    def test_semantic_roundtrip_write_load_write(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        write_results(a, self._dets())
        write_results(b, load_results(a))
        assert a.read_bytes() == b.read_bytes()

    def test_extra_fields_tolerated(self, tmp_path):
        path = tmp_path / "results.json"
        records = [
            {"image_id": 1, "category_id": 1, "score": 0.5, "bbox": [0, 0, 2, 2], "rank": 7}
        ]
        path.write_text(json.dumps(records))
        assert load_results(path)[0].score == 0.5

    def test_score_out_of_range(self, tmp_path):
        path = tmp_path / "results.json"
        path.write_text(json.dumps([{"image_id": 1, "category_id": 1, "score": 1.5, "bbox": [0, 0, 1, 1]}]))
        with pytest.raises(SchemaError, match="score"):
            load_results(path)

    def test_bbox_derived_from_mask(self, tmp_path):
        bits = np.zeros((5, 5), dtype=bool)
        bits[1:3, 2:4] = True
        rle = rle_encode(bits)
        path = tmp_path / "results.json"
        path.write_text(
            json.dumps(
                [
                    {
                        "image_id": 1,
                        "category_id": 1,
                        "score": 0.5,
                        "segmentation": {"size": [5, 5], "counts": rle_string_encode(rle)},
                    }
                ]
            )
        )
        assert load_results(path)[0].bbox == mask_bbox(bits)

    def test_needs_bbox_or_mask(self, tmp_path):
        path = tmp_path / "results.json"
        path.write_text(json.dumps([{"image_id": 1, "category_id": 1, "score": 0.5}]))
        with pytest.raises(SchemaError):
            load_results(path)


class TestAnnotationMask:
    def test_uncompressed_counts_list(self):
        rle = annotation_mask({"size": [2, 2], "counts": [2, 1, 1]}, 2, 2)
        assert rle.counts.tolist() == [2, 1, 1]

    def test_size_mismatch(self):
        with pytest.raises(SchemaError):
            annotation_mask({"size": [3, 3], "counts": [9]}, 2, 2)

    def test_polygon_list(self):
        rle = annotation_mask([[0, 0, 2, 0, 2, 2, 0, 2]], 4, 4)
        assert rle_decode(rle)[0:2, 0:2].all()


class TestSizeStats:
    @staticmethod
    def _boxes(sides):
        return [BBox(0, 0, s, s) for s in sides]

    def test_histogram_example(self):
        hist = size_histogram(self._boxes([10, 250, 251]), 50)
        assert hist.counts[0] == 1
        assert hist.counts[5] == 2
        assert hist.total == 3

    def test_empty_histogram(self):
        hist = size_histogram([], 50)
        assert hist.counts == ()
        assert hist.total == 0

    def test_bins_exhaustive(self):
        rng = np.random.default_rng(61)
        boxes = [BBox(0, 0, float(s), float(s)) for s in rng.uniform(1, 400, 100)]
        hist = size_histogram(boxes, 25)
        assert hist.total == 100

    def test_median_exact(self):
        assert median_sqrt_area(self._boxes([100, 250, 400])) == 250.0

    def test_median_lower_for_even(self):
        assert median_sqrt_area(self._boxes([100, 250])) == 100.0

    def test_median_empty(self):
        with pytest.raises(ValueError, match="empty input"):
            median_sqrt_area([])

    def test_csv_shape(self):
        csv = size_histogram(self._boxes([10, 60]), 50).to_csv()
        lines = csv.strip().splitlines()
        assert lines[0] == "bin_start,bin_end,count"
        assert lines[1] == "0,50,1"
        assert lines[2] == "50,100,1"


class TestFieldArchive:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(71)
        instances = [
            FieldInstance(
                instance_id=f"inst{i}",
                image_id=i + 1,
                category_id=2,
                score=0.5 + 0.1 * i,
                field=ScoreField(rng.normal(size=(7, 7))),
                bbox=BBox(0, 0, 4, 4) if i % 2 else None,
            )
            for i in range(3)
        ]
        path = tmp_path / "fields.npz"
        write_field_archive(path, instances)
        loaded = load_field_archive(path)
        assert [li.instance_id for li in loaded] == ["inst0", "inst1", "inst2"]
        for orig, back in zip(instances, loaded):
            assert np.array_equal(orig.field.logits, back.field.logits)
            assert orig.bbox == back.bbox
            assert orig.score == back.score

    def test_duplicate_ids_rejected(self, tmp_path):
        inst = FieldInstance("x", 1, 1, 0.5, ScoreField.constant(2, 2))
        with pytest.raises(ValueError):
            write_field_archive(tmp_path / "f.npz", [inst, inst])

    def test_missing_file(self):
        with pytest.raises(SchemaError):
            load_field_archive("/nonexistent/fields.npz")
