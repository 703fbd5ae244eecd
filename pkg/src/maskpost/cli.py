"""Command-line entry point.

Subcommands: ``refine`` (subdivision rendering of score fields),
``ensemble`` (multi-model fusion), ``eval`` (mask AP report) and ``stats``
(box size histogram). Options resolve as CLI flag > config file > built-in
default, and every run writes the resolved configuration next to its
output. Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .core import BBox, binarize, mask_bbox, mask_iou, rle_encode, resample
from .coco_io import (
    SchemaError,
    dataset_ground_truth,
    load_dataset,
    load_field_archive,
    load_results,
    median_sqrt_area,
    size_histogram,
    write_results,
)
from .evaluation import EvalConfig, evaluate
from .fusion import Detection, EnsembleConfig, ModelCandidate, SoftNmsConfig, ensemble
from .refine import IdentityPredictor, OracleFieldPredictor, SubdivisionConfig, subdivision_render
from .synthetic import parse_corpus_spec, shape_field, shape_mask

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


class InputError(Exception):
    """User-facing input problem; reported on stderr with exit code 2."""


_DEFAULTS = {
    "refine": {
        "subdivision_k": 28,
        "target_side": 224,
        "start_side": 7,
        "predictor": "oracle",
        "threads": 0,
        "seed": 0,
    },
    "ensemble": {
        "strategy": "linear_interpolation",
        "theta_min": 0.6,
        "theta_max": 1.0,
        "nms_method": "gaussian",
        "sigma": 0.5,
        "iou_threshold": 0.5,
        "score_floor": 0.001,
        "class_agnostic": False,
        "mask_iou_nms": False,
        "merge_masks": False,
        "cluster_iou": 0.5,
        "threads": 0,
        "seed": 0,
    },
    "eval": {
        "iou_on": "mask",
        "max_dets": 100,
        "threads": 0,
        "seed": 0,
    },
    "stats": {
        "bin_width": 25.0,
        "sample_n": 10000,
        "seed": 0,
        "threads": 0,
    },
}


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge built-in defaults, --config file values and explicit flags."""
    resolved = dict(_DEFAULTS[command])
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path}: invalid JSON ({exc})")
        if not isinstance(loaded, dict):
            raise InputError(f"config file {path}: expected a JSON object")
        for key, value in loaded.items():
            if key in resolved:
                resolved[key] = value
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_sidecar(out_path: str, command: str, resolved: dict, inputs: dict) -> None:
    sidecar = Path(str(out_path) + ".config.json")
    payload = {"command": command, "inputs": inputs, "options": resolved}
    sidecar.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _worker_count(opts: dict) -> int:
    """0 (the default) means one worker per available core."""
    threads = int(opts["threads"])
    return threads if threads > 0 else (os.cpu_count() or 1)


def _require_path(path: str | None, what: str) -> Path:
    if not path:
        raise InputError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------------

def _render_units(args, opts):
    """Assemble (sort_key, image_id, category_id, score, bbox, coarse, predictor, gt_mask)."""
    cfg = SubdivisionConfig(
        subdivision_k=int(opts["subdivision_k"]),
        target_side=int(opts["target_side"]),
        start_side=int(opts["start_side"]),
    )
    units = []
    if args.synthetic:
        try:
            shapes = parse_corpus_spec(args.synthetic)
        except ValueError as exc:
            raise InputError(str(exc))
        for i, shape in enumerate(shapes):
            gt_field = shape_field(shape, cfg.target_side)
            coarse = resample(gt_field, cfg.start_side, cfg.start_side)
            predictor = (
                IdentityPredictor()
                if opts["predictor"] == "identity"
                else OracleFieldPredictor(gt_field)
            )
            units.append(
                (f"shape{i:04d}", i + 1, 1, 1.0, None, coarse, predictor,
                 shape_mask(shape, cfg.target_side))
            )
        return cfg, units
    coarse_path = _require_path(args.coarse, "--coarse input (or use --synthetic)")
    try:
        instances = load_field_archive(coarse_path)
    except SchemaError as exc:
        raise InputError(str(exc))
    oracle_fields = {}
    if opts["predictor"] == "oracle":
        oracle_path = _require_path(
            args.oracle, "--oracle archive (required with the oracle predictor)"
        )
        try:
            for inst in load_field_archive(oracle_path):
                oracle_fields[inst.instance_id] = inst.field
        except SchemaError as exc:
            raise InputError(str(exc))
    for inst in instances:
        if opts["predictor"] == "identity":
            predictor, gt_mask = IdentityPredictor(), None
        else:
            if inst.instance_id not in oracle_fields:
                raise InputError(f"oracle archive has no instance {inst.instance_id}")
            ref = oracle_fields[inst.instance_id]
            predictor = OracleFieldPredictor(ref)
            gt_mask = binarize(resample(ref, cfg.target_side, cfg.target_side))
        units.append(
            (inst.instance_id, inst.image_id, inst.category_id, inst.score,
             inst.bbox, inst.field, predictor, gt_mask)
        )
    return cfg, units


def cmd_refine(args: argparse.Namespace) -> None:
    opts = _resolve(args, "refine")
    if args.synthetic and args.coarse:
        raise InputError("--synthetic and --coarse are mutually exclusive")
    try:
        cfg, units = _render_units(args, opts)
    except ValueError as exc:
        raise InputError(str(exc))

    def render(unit):
        key, image_id, category_id, score, bbox, coarse, predictor, gt_mask = unit
        field = subdivision_render(coarse, predictor, cfg)
        mask = binarize(field)
        det = Detection(
            image_id=image_id,
            category_id=category_id,
            score=score,
            bbox=bbox if bbox is not None else mask_bbox(mask),
            mask=rle_encode(mask),
        )
        iou = None if gt_mask is None else mask_iou(mask, gt_mask)
        return key, det, iou

    threads = _worker_count(opts)
    if threads > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rendered = list(pool.map(render, units))
    else:
        rendered = [render(u) for u in units]
    rendered.sort(key=lambda r: r[0])

    dets = [det for _, det, _ in rendered]
    dets.sort(key=lambda d: (d.image_id, d.category_id, -d.score))
    write_results(args.out, dets)
    ious = [iou for _, _, iou in rendered if iou is not None]
    if ious:
        print(f"mean_iou {float(np.mean(ious)):.6f}")
    print(f"rendered {len(dets)} instances -> {args.out}")
    _write_sidecar(
        args.out,
        "refine",
        opts,
        {"coarse": args.coarse, "oracle": args.oracle, "synthetic": args.synthetic},
    )


# ---------------------------------------------------------------------------
# ensemble
# ---------------------------------------------------------------------------

def _parse_model_arg(spec: str) -> tuple[str, float]:
    path, sep, score = spec.rpartition(":")
    if not sep or not path:
        raise InputError(f"--model expects PATH:SCORE, got {spec!r}")
    try:
        return path, float(score)
    except ValueError:
        raise InputError(f"--model {spec!r}: score {score!r} is not a number")


def cmd_ensemble(args: argparse.Namespace) -> None:
    opts = _resolve(args, "ensemble")
    if not args.model:
        raise InputError("at least one --model PATH:SCORE is required")
    models = []
    image_sets = []
    for spec in args.model:
        path, score = _parse_model_arg(spec)
        _require_path(path, "model results file")
        try:
            dets = load_results(path)
        except SchemaError as exc:
            raise InputError(str(exc))
        models.append(ModelCandidate(model_id=path, validation_score=score, detections=dets))
        image_sets.append({d.image_id for d in dets})
    if len(set(map(frozenset, image_sets))) > 1:
        print("warning: model files cover different image id sets", file=sys.stderr)

    cfg = EnsembleConfig(
        theta_min=float(opts["theta_min"]),
        theta_max=float(opts["theta_max"]),
        strategy=str(opts["strategy"]),
        nms=SoftNmsConfig(
            method=str(opts["nms_method"]),
            sigma=float(opts["sigma"]),
            iou_threshold=float(opts["iou_threshold"]),
            score_floor=float(opts["score_floor"]),
            per_category=not opts["class_agnostic"],
            use_mask_iou=bool(opts["mask_iou_nms"]),
        ),
        merge_masks=bool(opts["merge_masks"]),
        cluster_iou=float(opts["cluster_iou"]),
    )
    from .fusion import linear_interpolation_weights, linear_reweight_weights

    scores = [m.validation_score for m in models]
    if cfg.strategy == "linear_interpolation":
        weights = linear_interpolation_weights(scores, cfg.theta_min, cfg.theta_max)
    else:
        weights = linear_reweight_weights(scores, cfg.theta_min, cfg.theta_max)
    for model, w in zip(models, weights):
        print(f"weight {model.model_id} {w:.6f}")

    fused = ensemble(models, cfg, workers=_worker_count(opts))
    write_results(args.out, fused)
    print(f"fused {len(fused)} detections -> {args.out}")
    _write_sidecar(args.out, "ensemble", opts, {"models": list(args.model)})


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> None:
    opts = _resolve(args, "eval")
    gt_path = _require_path(args.gt, "--gt dataset file")
    results_path = _require_path(args.results, "--results file")
    try:
        gts = dataset_ground_truth(load_dataset(gt_path))
        dets = load_results(results_path)
    except SchemaError as exc:
        raise InputError(str(exc))
    cfg = EvalConfig(
        max_detections_per_image=int(opts["max_dets"]),
        iou_on=str(opts["iou_on"]),
    )
    report = evaluate(gts, dets, cfg, workers=_worker_count(opts))
    out = Path(args.out)
    out.write_text(report.to_json())
    out.with_suffix(".txt").write_text(report.to_text())
    sys.stdout.write(report.to_text())
    _write_sidecar(args.out, "eval", opts, {"gt": args.gt, "results": args.results})


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def cmd_stats(args: argparse.Namespace) -> None:
    opts = _resolve(args, "stats")
    gt_path = _require_path(args.gt, "--gt dataset file")
    try:
        ds = load_dataset(gt_path)
    except SchemaError as exc:
        raise InputError(str(exc))
    sample_n = int(opts["sample_n"])
    image_ids = [img.id for img in ds.images]
    if 0 < sample_n < len(image_ids):
        rng = np.random.default_rng(int(opts["seed"]))
        chosen = set(rng.choice(np.array(image_ids), size=sample_n, replace=False).tolist())
    else:
        chosen = set(image_ids)
    boxes = [
        BBox(*ann.bbox)
        for ann in ds.annotations
        if ann.image_id in chosen and ann.bbox is not None
    ]
    if not boxes:
        raise InputError("no boxes found in the selected images")
    hist = size_histogram(boxes, float(opts["bin_width"]))
    Path(args.out).write_text(hist.to_csv())
    print(f"median_sqrt_area {median_sqrt_area(boxes):.6f}")
    print(f"boxes {hist.total} -> {args.out}")
    _write_sidecar(args.out, "stats", opts, {"gt": args.gt})


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskpost",
        description="Instance-mask post-processing: rendering, ensembling, evaluation.",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="JSON file of option defaults")
        p.add_argument("--seed", type=int, help="random seed where sampling applies")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores, default)")
        p.add_argument("--out", required=True, help="output file path")

    p = sub.add_parser("refine", help="render coarse score fields to full resolution")
    p.add_argument("--coarse", help="field archive (.npz) of coarse per-instance logits")
    p.add_argument("--oracle", help="field archive of reference logits for the oracle predictor")
    p.add_argument("--synthetic", help="shape corpus spec, e.g. 'default' or 'disk:10,rect:5'")
    p.add_argument("--predictor", choices=["oracle", "identity"], help="point predictor")
    p.add_argument("--subdivision-k", dest="subdivision_k", type=int,
                   help="points re-predicted per step = k^2")
    p.add_argument("--target-side", dest="target_side", type=int, help="output resolution")
    p.add_argument("--start-side", dest="start_side", type=int, help="coarse resolution")
    common(p)
    p.set_defaults(handler=cmd_refine)

    p = sub.add_parser("ensemble", help="fuse detection files from several models")
    p.add_argument("--model", action="append", metavar="PATH:SCORE",
                   help="results file and its validation score; repeatable")
    p.add_argument("--strategy", choices=["linear_interpolation", "linear_reweight"])
    p.add_argument("--theta-min", dest="theta_min", type=float)
    p.add_argument("--theta-max", dest="theta_max", type=float)
    p.add_argument("--nms-method", dest="nms_method", choices=["gaussian", "linear", "hard"])
    p.add_argument("--sigma", type=float, help="gaussian decay width")
    p.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    p.add_argument("--score-floor", dest="score_floor", type=float)
    p.add_argument("--class-agnostic", dest="class_agnostic", action="store_const", const=True,
                   help="suppress across categories")
    p.add_argument("--mask-iou-nms", dest="mask_iou_nms", action="store_const", const=True,
                   help="overlap on masks instead of boxes")
    p.add_argument("--merge-masks", dest="merge_masks", action="store_const", const=True,
                   help="vote-merge masks of near-duplicate survivors")
    p.add_argument("--cluster-iou", dest="cluster_iou", type=float)
    common(p)
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("eval", help="COCO-style mask AP report")
    p.add_argument("--gt", help="dataset JSON with ground-truth annotations")
    p.add_argument("--results", help="detection results JSON")
    p.add_argument("--iou-on", dest="iou_on", choices=["mask", "bbox"])
    p.add_argument("--max-dets", dest="max_dets", type=int,
                   help="detections kept per image and category")
    common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("stats", help="box size histogram and median")
    p.add_argument("--gt", help="dataset JSON")
    p.add_argument("--bin-width", dest="bin_width", type=float, help="sqrt-area bin width")
    p.add_argument("--sample-n", dest="sample_n", type=int,
                   help="images sampled before counting (0 = all)")
    common(p)
    p.set_defaults(handler=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
