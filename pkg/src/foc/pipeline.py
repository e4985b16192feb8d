"""Batch orchestration: preprocess, detect, segment, inpaint, merge, report."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import ManifestRow
from .detect import (
    ChtConfig,
    Detection,
    DetectionFilterConfig,
    cht_detect,
    detections_by_image,
    filter_and_nms,
    load_detections,
)
from .errors import ConfigError, StageError
from .imaging import (
    BoundingBox,
    PreprocessConfig,
    crop_roi,
    expand_box,
    normalize_minmax,
    read_image,
    resize,
    write_image,
    write_mask,
)
from .inpaint import InpaintConfig, inpaint_objects
from .metrics import completeness_report
from .segment import (
    SegmentConfig,
    fallback_segment,
    find_probmap,
    load_probability_map,
    segment_probability,
)

log = logging.getLogger(__name__)

STAGES = ("load", "preprocess", "detect", "segment", "inpaint")


@dataclass(frozen=True)
class DetectStageConfig:
    source: str = "cht"
    detections_path: Optional[str] = None
    confidence_threshold: float = 0.30
    nms_iou_threshold: float = 0.60
    cht: ChtConfig = ChtConfig()

    def __post_init__(self):
        if self.source not in ("cht", "file"):
            raise ConfigError(f"detect.source must be 'cht' or 'file', got {self.source!r}")
        if self.source == "file" and not self.detections_path:
            raise ConfigError("detect.source 'file' needs detect.detections_path")

    @property
    def filter(self) -> DetectionFilterConfig:
        return DetectionFilterConfig(self.confidence_threshold, self.nms_iou_threshold)


@dataclass(frozen=True)
class SegmentStageConfig:
    source: str = "fallback"
    probmaps_dir: Optional[str] = None
    binarize_threshold: float = 0.5
    keep_largest_component_only: bool = True

    def __post_init__(self):
        if self.source not in ("fallback", "file"):
            raise ConfigError(f"segment.source must be 'fallback' or 'file', got {self.source!r}")
        if self.source == "file" and not self.probmaps_dir:
            raise ConfigError("segment.source 'file' needs segment.probmaps_dir")

    @property
    def params(self) -> SegmentConfig:
        return SegmentConfig(self.binarize_threshold, self.keep_largest_component_only)


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = PreprocessConfig()
    detect: DetectStageConfig = DetectStageConfig()
    segment: SegmentStageConfig = SegmentStageConfig()
    inpaint: InpaintConfig = InpaintConfig()
    # pixels added around each detection box before segmentation
    roi_padding: int = 2
    output_dir: Optional[str] = None
    report_path: Optional[str] = None
    strict: bool = False
    workers: int = 1
    figures: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("pipeline config must be a JSON object")
    data = dict(data)
    detect = dict(data.pop("detect", None) or {})
    cht = _build(ChtConfig, detect.pop("cht", None), "detect.cht")
    parts = {
        "preprocess": _build(PreprocessConfig, data.pop("preprocess", None), "preprocess"),
        "detect": _build(DetectStageConfig, {**detect, "cht": cht}, "detect"),
        "segment": _build(SegmentStageConfig, data.pop("segment", None), "segment"),
        "inpaint": _build(InpaintConfig, data.pop("inpaint", None), "inpaint"),
    }
    return _build(PipelineConfig, {**data, **parts}, "config")


def load_config(path) -> PipelineConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


@dataclass
class ImageResult:
    image_id: str
    preprocessed: Optional[np.ndarray] = None
    output: Optional[np.ndarray] = None
    detections: List[Detection] = field(default_factory=list)
    objects: List[Tuple[BoundingBox, np.ndarray]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    error: Optional[StageError] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def object_masks(self) -> List[np.ndarray]:
        """Per-object masks in full-image coordinates."""
        h, w = self.preprocessed.shape
        out = []
        for box, mask in self.objects:
            full = np.zeros((h, w), dtype=np.uint8)
            full[box.y:box.y2, box.x:box.x2] = mask
            out.append(full)
        return out

    def entry(self) -> dict:
        err = None
        if self.error is not None:
            err = {"stage": self.error.stage, "type": type(self.error.cause).__name__,
                   "message": str(self.error.cause)}
        return {
            "image_id": self.image_id,
            "status": "ok" if self.ok else "error",
            "error": err,
            "detections_kept": len(self.detections),
            "detections": [d.to_json() for d in self.detections],
            "objects_segmented": len(self.objects),
            "inpainted": self.ok and len(self.objects) == len(self.detections),
        }


class _Stage:
    def __init__(self, result: ImageResult, name: str):
        self.result, self.name = result, name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.result.timings[self.name] = time.perf_counter() - self.start
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, self.result.image_id, exc) from exc
        return False


def process_image(image, cfg: PipelineConfig, image_id: str = "image",
                  detections: Optional[Sequence[Detection]] = None) -> ImageResult:
    """Run every stage on one image, raising StageError on the first failure.

    ``detections`` overrides the configured detector (already-loaded file
    records for this image).
    """
    res = ImageResult(image_id)
    with _Stage(res, "preprocess"):
        pre = resize(normalize_minmax(image), cfg.preprocess)
        res.preprocessed = pre
    h, w = pre.shape

    with _Stage(res, "detect"):
        if detections is None:
            if cfg.detect.source == "file":
                table = detections_by_image(load_detections(cfg.detect.detections_path))
                detections = table.get(image_id, [])
            else:
                detections = cht_detect(pre, cfg.detect.cht)
        for det in detections:
            if not det.box.fits(w, h):
                crop_roi(pre, det.box)  # raises OutOfBounds with context
        res.detections = filter_and_nms(detections, cfg.detect.filter)

    with _Stage(res, "segment"):
        params = cfg.segment.params
        for k, det in enumerate(res.detections):
            box = expand_box(det.box, cfg.roi_padding, w, h)
            roi = crop_roi(pre, box)
            if cfg.segment.source == "file":
                prob = load_probability_map(find_probmap(cfg.segment.probmaps_dir, image_id, k))
                mask = segment_probability(prob, roi.shape, params)
            else:
                mask = fallback_segment(roi, params)
            if mask.any():
                res.objects.append((box, mask))

    with _Stage(res, "inpaint"):
        res.output = inpaint_objects(pre, res.objects, cfg.inpaint) if res.objects else pre.copy()
    return res


def run_pipeline(image, cfg: PipelineConfig, image_id: str = "image",
                 detections: Optional[Sequence[Detection]] = None) -> Tuple[np.ndarray, dict]:
    """Clean one image; returns the merged output and its report entry."""
    res = process_image(image, cfg, image_id, detections)
    entry = res.entry()
    entry["seconds"] = dict(res.timings)
    return res.output, entry


# -- batch ------------------------------------------------------------------

def _resolve(row: ManifestRow, base: Optional[Path]) -> Path:
    p = Path(row.path)
    return p if p.is_absolute() or base is None else base / p


def _work(args) -> ImageResult:
    row, cfg, base, file_dets, file_error = args
    res = ImageResult(row.image_id)
    try:
        with _Stage(res, "load"):
            image = read_image(_resolve(row, base))
        if file_error is not None:
            raise StageError("detect", row.image_id, file_error)
        dets = None if file_dets is None else file_dets.get(row.image_id, [])
        loaded = res.timings
        res = process_image(image, cfg, row.image_id, dets)
        res.timings = {**loaded, **res.timings}
    except StageError as err:
        res.error = err
        log.warning("%s", err)
    return res


def run_batch(rows: Sequence[ManifestRow], cfg: PipelineConfig,
              base_dir=None) -> List[ImageResult]:
    """Process every manifest row; failures are recorded per image.

    With ``cfg.strict`` the batch stops at the first failed image. Results
    are sorted by image_id whatever the worker count.
    """
    base = Path(base_dir) if base_dir is not None else None
    file_dets, file_error = None, None
    if cfg.detect.source == "file":
        try:
            file_dets = detections_by_image(load_detections(cfg.detect.detections_path))
        except Exception as exc:  # reported per image, batch continues
            file_error = exc
    jobs = [(row, cfg, base, file_dets, file_error) for row in rows]

    results: List[ImageResult] = []
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for res in pool.map(_work, jobs):
                results.append(res)
                if cfg.strict and not res.ok:
                    break
    else:
        for job in jobs:
            res = _work(job)
            results.append(res)
            if cfg.strict and not res.ok:
                break
    return sorted(results, key=lambda r: r.image_id)


def aggregate_metrics(results: Sequence[ImageResult]) -> Optional[dict]:
    if not results:
        return None
    ok = [r for r in results if r.ok]
    return {
        "images": len(results),
        "failed_images": len(results) - len(ok),
        "detections_kept": sum(len(r.detections) for r in ok),
        "objects_segmented": sum(len(r.objects) for r in ok),
        "images_with_objects": sum(1 for r in ok if r.objects),
    }


def emit_report(entries: Sequence[dict], metrics: Optional[dict], cfg: PipelineConfig,
                path, completeness_flags: Optional[Sequence[Tuple[str, bool]]] = None,
                timing: Optional[dict] = None) -> dict:
    """Write the run report as deterministic JSON.

    Everything that varies between identical runs (timestamp and wall-clock
    seconds) lives under the single ``timing`` key.
    """
    entries = sorted(entries, key=lambda e: e["image_id"])
    if completeness_flags is None:
        completeness_flags = [(e["image_id"], bool(e.get("inpainted"))) for e in entries]
    completeness = completeness_report(completeness_flags).to_json() if completeness_flags else None
    timing = dict(timing or {})
    timing["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    report = {
        "config": cfg.to_json(),
        "images": entries,
        "metrics": metrics,
        "completeness": completeness,
        "timing": timing,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return report


def write_summary_csv(path, entries: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "status", "detections_kept", "objects_segmented",
                         "inpainted", "error_stage"])
        for e in sorted(entries, key=lambda e: e["image_id"]):
            writer.writerow([e["image_id"], e["status"], e["detections_kept"],
                             e["objects_segmented"], int(e["inpainted"]),
                             (e["error"] or {}).get("stage", "")])


def write_outputs(results: Sequence[ImageResult], cfg: PipelineConfig, out_dir) -> dict:
    """Images, per-object masks, report.json, report.csv and optional figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for res in results:
        if not res.ok:
            continue
        write_image(out_dir / "images" / f"{res.image_id}.png", res.output)
        for k, full in enumerate(res.object_masks()):
            write_mask(out_dir / "masks" / f"{res.image_id}__obj{k}.png", full)

    entries = [r.entry() for r in results]
    stage_totals = {s: round(sum(r.timings.get(s, 0.0) for r in results), 6) for s in STAGES}
    per_image = {r.image_id: {k: round(v, 6) for k, v in sorted(r.timings.items())}
                 for r in results}
    report_path = Path(cfg.report_path) if cfg.report_path else out_dir / "report.json"
    report = emit_report(entries, aggregate_metrics(results), cfg, report_path,
                         timing={"stage_seconds": stage_totals, "per_image": per_image})
    write_summary_csv(out_dir / "report.csv", entries)

    if cfg.figures and results:
        from . import plotting

        for res in results:
            if res.ok:
                plotting.render_image_panel(res, out_dir / "figures" / f"{res.image_id}.png")
        plotting.render_run_summary(results, out_dir / "figures" / "summary.png")
    return report
