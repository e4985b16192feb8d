"""``foc`` command line entry point."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import load_annotations, validate_files
from .dataset import parse_fractions, read_id_list, read_manifest, split_dataset, write_manifest
from .detect import (
    Detection,
    DetectionFilterConfig,
    cht_detect,
    detections_by_image,
    detections_to_json,
    filter_and_nms,
    load_detections,
    save_detections,
)
from .errors import ConfigError, FocError, ParseError
from .imaging import (
    binarize,
    crop_roi,
    list_images,
    mask_bbox,
    preprocess,
    read_image,
    write_image,
    write_mask,
)
from .inpaint import InpaintConfig, inpaint_objects
from .metrics import (
    CountPair,
    average_precision_50,
    avg_dice,
    completeness_report,
    evaluate_detection_set,
    lung_filter,
    mdoc,
    overlap_metrics,
    ranked_pr_curve,
)
from .pipeline import PipelineConfig, load_config, run_batch, write_outputs
from .segment import SegmentConfig, fallback_segment, load_probability_map, segment_probability

log = logging.getLogger("foc")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
REPORT_KEYS = ("precision", "recall", "f1", "map50", "dice", "iou", "pixel_accuracy",
               "mdoc", "avg_dice", "completeness")


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _round(value):
    return None if value is None else round(float(value), 6)


def eval_report(**values) -> dict:
    """Evaluation report with every metric key present (null when not measured)."""
    report = {k: _round(values.pop(k, None)) for k in REPORT_KEYS}
    report.update(values)
    return report


# -- detect / segment / inpaint ---------------------------------------------

def cmd_detect(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    images = list_images(args.input)
    loaded = detections_by_image(load_detections(args.detections)) if args.detections else None
    out = []
    for path in images:
        image_id = path.stem
        if loaded is not None:
            dets = loaded.get(image_id, [])
        else:
            dets = cht_detect(preprocess(read_image(path), cfg.preprocess), cfg.detect.cht)
        out.append((image_id, filter_and_nms(dets, cfg.detect.filter)))
    if args.out:
        save_detections(args.out, out)
    else:
        _dump(detections_to_json(out), None)
    return EXIT_OK


def cmd_segment(args) -> int:
    cfg = SegmentConfig(args.threshold, not args.keep_all_components)
    out_dir = Path(args.out)
    for path in list_images(args.rois):
        roi = read_image(path)
        if args.probmaps:
            prob_path = Path(args.probmaps) / path.name
            mask = segment_probability(load_probability_map(prob_path), roi.shape, cfg)
        else:
            mask = fallback_segment(roi, cfg)
        write_mask(out_dir / f"{path.stem}.png", mask)
    return EXIT_OK


def cmd_inpaint(args) -> int:
    img = read_image(args.image)
    pairs = []
    for path in list_images(args.masks):
        full = binarize(read_image(path) / 255.0, 0.5)
        if full.shape != img.shape:
            raise ParseError(f"{path}: mask {full.shape} does not match image {img.shape}")
        box = mask_bbox(full)
        if box is not None:
            pairs.append((box, crop_roi(full, box)))
    write_image(args.out, inpaint_objects(img, pairs, InpaintConfig(args.radius)))
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def _lung_masks(spec):
    """One mask for every image (a file) or ``<image_id>.png`` per image (a directory)."""
    if spec is None:
        return None
    p = Path(spec)
    if p.is_dir():
        return {f.stem: read_image(f) for f in list_images(p)}
    return read_image(p)


def _lung_for(masks, image_id):
    if masks is None:
        return None
    if isinstance(masks, dict):
        return masks.get(image_id)
    return masks


def cmd_eval_detection(args) -> int:
    preds = detections_by_image(load_detections(args.pred))
    gts = {k: [d.box for d in v]
           for k, v in detections_by_image(load_detections(args.gt, require_confidence=False)).items()}
    if not args.no_filter:
        flt = DetectionFilterConfig(args.conf, args.nms)
        preds = {k: filter_and_nms(v, flt) for k, v in preds.items()}
    lungs = _lung_masks(args.lung_mask)
    if lungs is not None:
        for k in sorted(set(preds) | set(gts)):
            lung = _lung_for(lungs, k)
            if lung is not None:
                preds[k] = lung_filter(preds.get(k, []), lung)
                gts[k] = lung_filter(gts.get(k, []), lung)

    result = evaluate_detection_set(preds, gts, args.iou)
    ids = sorted(set(preds) | set(gts))
    pairs = [CountPair(len(gts.get(k, [])), len(preds.get(k, []))) for k in ids]
    counting = mdoc(pairs) if sum(p.ground_truth_count for p in pairs) else None
    report = eval_report(precision=result.precision, recall=result.recall, f1=result.f1,
                         map50=result.map50, mdoc=counting,
                         counts={"tp": result.tp, "fp": result.fp, "fn": result.fn,
                                 "images": len(ids)})
    _dump(report, args.out)
    if args.figures:
        from .plotting import render_pr_curve

        pred_pairs = [(d, k) for k, ds in preds.items() for d in ds]
        gt_pairs = [(b, k) for k, bs in gts.items() for b in bs]
        recall, precision = ranked_pr_curve(pred_pairs, gt_pairs, args.iou)
        ap = average_precision_50(pred_pairs, gt_pairs, args.iou)
        target = Path(args.out).with_suffix(".pr.png") if args.out else Path("pr_curve.png")
        render_pr_curve(recall, precision, ap, target)
    return EXIT_OK


def _mask_groups(directory):
    """``<image_id>__obj<k>.png`` (or ``<image_id>.png``) grouped per image."""
    groups = {}
    for path in list_images(directory):
        image_id = path.stem.split("__obj")[0]
        groups.setdefault(image_id, []).append(path)
    return {k: [binarize(load_probability_map(p), 0.5) for p in sorted(v)]
            for k, v in groups.items()}


def cmd_eval_segmentation(args) -> int:
    preds = _mask_groups(args.pred)
    gts = _mask_groups(args.gt)
    ids = sorted(set(preds) | set(gts))
    per_image, samples, pairs = [], [], []
    for k in ids:
        g, p = gts.get(k, []), preds.get(k, [])
        shape = (g or p)[0].shape
        g_union = np.zeros(shape, dtype=np.uint8)
        p_union = np.zeros(shape, dtype=np.uint8)
        for m in g:
            g_union = np.maximum(g_union, m)
        for m in p:
            p_union = np.maximum(p_union, m)
        per_image.append(overlap_metrics(g_union, p_union))
        samples.append((g, p))
        pairs.append(CountPair(len(g), len(p)))
    if not ids:
        raise ParseError("no masks found")
    means = np.mean(np.array(per_image), axis=0)
    counting = mdoc(pairs) if sum(p.ground_truth_count for p in pairs) else None
    report = eval_report(dice=means[0], iou=means[1], pixel_accuracy=means[2],
                         avg_dice=avg_dice(samples), mdoc=counting,
                         counts={"images": len(ids),
                                 "gt_objects": sum(p.ground_truth_count for p in pairs),
                                 "pred_objects": sum(p.predicted_count for p in pairs)})
    _dump(report, args.out)
    return EXIT_OK


def _truthy(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "y")


def read_flags(path):
    """Completeness flags from a CSV, a JSON list/object, or a pipeline report."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        data = json.loads(text)
        if isinstance(data, dict) and "images" in data:
            return [(e["image_id"], bool(e.get("inpainted"))) for e in data["images"]]
        if isinstance(data, dict):
            return [(k, _truthy(v)) for k, v in sorted(data.items())]
        return [(r["image_id"], _truthy(r["fully_inpainted"])) for r in data]
    rows = list(csv.DictReader(text.splitlines()))
    if rows and "fully_inpainted" not in rows[0]:
        raise ParseError(f"{path}: expected columns image_id,fully_inpainted")
    return [(r["image_id"], _truthy(r["fully_inpainted"])) for r in rows]


def cmd_eval_inpainting(args) -> int:
    rep = completeness_report(read_flags(args.pred))
    _dump(eval_report(completeness=rep.fraction, completeness_report=rep.to_json()), args.out)
    return EXIT_OK


# -- annotate / pipeline / dataset / synth ----------------------------------

def cmd_annotate_validate(args) -> int:
    a = load_annotations(args.a)
    b = load_annotations(args.b) if args.b else ()
    lung = read_image(args.lung_mask) if args.lung_mask else None
    results = validate_files(a, b, lung)
    _dump(results, args.out)
    return EXIT_OK if all(r["compliant"] for r in results) else EXIT_FAILED


def cmd_pipeline_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.strict:
        overrides["strict"] = True
    if args.figures:
        overrides["figures"] = True
    if args.workers:
        overrides["workers"] = args.workers
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    rows = read_manifest(args.manifest)
    results = run_batch(rows, cfg, base_dir=Path(args.manifest).parent)
    write_outputs(results, cfg, args.out)
    failed = [r for r in results if not r.ok]
    log.info("%d images, %d failed", len(results), len(failed))
    return EXIT_FAILED if cfg.strict and failed else EXIT_OK


def cmd_dataset_split(args) -> int:
    rows = read_manifest(args.manifest)
    exclusion = read_id_list(args.exclude) if args.exclude else set()
    names = args.names.split(",") if args.names else None
    if args.sizes:
        if args.sizes.lstrip().startswith("{"):
            # {"train": {"Normal": 196, "Abnormal": 200}, "test": 122}
            try:
                sizes = json.loads(args.sizes)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--sizes: {exc}") from exc
        else:
            counts = [int(v) for v in args.sizes.split(",")]
            names = names or ["train", "test", "val"][:len(counts)]
            if len(names) != len(counts):
                raise ConfigError("number of split names and sizes differ")
            sizes = dict(zip(names, counts))
        out = split_dataset(rows, sizes=sizes, balance_tolerance=args.tolerance,
                            exclusion=exclusion, seed=args.seed)
    else:
        out = split_dataset(rows, parse_fractions(args.fractions, names),
                            balance_tolerance=args.tolerance, exclusion=exclusion, seed=args.seed)
    write_manifest(args.out or sys.stdout, out)
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import make_suite

    out = Path(args.out)
    rows, truth = [], []
    for i, scene in enumerate(make_suite(args.seed, args.count, size=args.size)):
        image_id = f"synth_{i:03d}"
        write_image(out / "images" / f"{image_id}.png", scene.dirty)
        write_image(out / "clean" / f"{image_id}.png", scene.clean)
        for k, m in enumerate(scene.object_masks()):
            write_mask(out / "gt_masks" / f"{image_id}__obj{k}.png", m)
        boxes = [mask_bbox(m) for m in scene.object_masks()]
        truth.append((image_id, [Detection(b, 1.0) for b in boxes]))
        rows.append([image_id, f"images/{image_id}.png", "Abnormal", ""])
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "path", "label", "split"])
        writer.writerows(rows)
    save_detections(out / "gt_detections.json", truth)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foc", description="Foreign-object cleaning for chest radiograph photos")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="detect objects (CHT, or filter a detections file)")
    d.add_argument("--input", required=True)
    d.add_argument("--config")
    d.add_argument("--detections")
    d.add_argument("--out")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("segment", help="binary masks for ROI crops")
    s.add_argument("--rois", required=True)
    s.add_argument("--probmaps")
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--keep-all-components", action="store_true")
    s.set_defaults(func=cmd_segment)

    i = sub.add_parser("inpaint", help="inpaint full-image masks into an image")
    i.add_argument("--image", required=True)
    i.add_argument("--masks", required=True)
    i.add_argument("--radius", type=int, default=5)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_inpaint)

    e = sub.add_parser("eval", help="score a stage").add_subparsers(dest="stage", required=True)
    ed = e.add_parser("detection")
    ed.add_argument("--pred", required=True)
    ed.add_argument("--gt", required=True)
    ed.add_argument("--out")
    ed.add_argument("--iou", type=float, default=0.5)
    ed.add_argument("--conf", type=float, default=0.30)
    ed.add_argument("--nms", type=float, default=0.60)
    ed.add_argument("--no-filter", action="store_true")
    ed.add_argument("--lung-mask")
    ed.add_argument("--figures", action="store_true")
    ed.set_defaults(func=cmd_eval_detection)
    es = e.add_parser("segmentation")
    es.add_argument("--pred", required=True)
    es.add_argument("--gt", required=True)
    es.add_argument("--out")
    es.set_defaults(func=cmd_eval_segmentation)
    ei = e.add_parser("inpainting")
    ei.add_argument("--pred", required=True)
    ei.add_argument("--gt")
    ei.add_argument("--out")
    ei.set_defaults(func=cmd_eval_inpainting)

    a = sub.add_parser("annotate").add_subparsers(dest="action", required=True)
    av = a.add_parser("validate")
    av.add_argument("--a", required=True)
    av.add_argument("--b")
    av.add_argument("--lung-mask")
    av.add_argument("--out")
    av.set_defaults(func=cmd_annotate_validate)

    pl = sub.add_parser("pipeline").add_subparsers(dest="action", required=True)
    pr = pl.add_parser("run")
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--strict", action="store_true")
    pr.add_argument("--figures", action="store_true")
    pr.add_argument("--workers", type=int)
    pr.set_defaults(func=cmd_pipeline_run)

    ds = sub.add_parser("dataset").add_subparsers(dest="action", required=True)
    dsp = ds.add_parser("split")
    dsp.add_argument("--manifest", required=True)
    group = dsp.add_mutually_exclusive_group(required=True)
    group.add_argument("--fractions")
    group.add_argument("--sizes", help="rows per split (comma list) or a JSON object of per-label counts")
    dsp.add_argument("--names")
    dsp.add_argument("--exclude")
    dsp.add_argument("--seed", type=int, default=17)
    dsp.add_argument("--tolerance", type=float, default=0.1)
    dsp.add_argument("--out")
    dsp.set_defaults(func=cmd_dataset_split)

    sy = sub.add_parser("synth", help="write a synthetic demo dataset")
    sy.add_argument("--out", required=True)
    sy.add_argument("--count", type=int, default=10)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--size", type=int, default=512)
    sy.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except FocError as exc:
        log.error("%s", exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
