"""Foreign-object detection: external-file adapter and a circular Hough detector."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, InvalidDetection, ParseError
from .imaging import BoundingBox, as_gray_image, box_iou

DEFAULT_CLASS = "foreign_object"


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    class_label: str = DEFAULT_CLASS

    def __post_init__(self):
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise InvalidDetection(f"confidence must lie in [0, 1], got {conf}")
        object.__setattr__(self, "confidence", conf)

    def to_json(self) -> dict:
        return {"box": self.box.as_list(), "confidence": self.confidence,
                "class": self.class_label}


@dataclass(frozen=True)
class DetectionFilterConfig:
    confidence_threshold: float = 0.30
    nms_iou_threshold: float = 0.60

    def __post_init__(self):
        for name in ("confidence_threshold", "nms_iou_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class ChtConfig:
    min_radius: int = 4
    max_radius: int = 14
    edge_magnitude_threshold: float = 20.0
    accumulator_peak_threshold: float = 0.5

    def __post_init__(self):
        if not 1 <= self.min_radius <= self.max_radius:
            raise ValueError("need 1 <= min_radius <= max_radius")
        if not 0.0 < self.accumulator_peak_threshold <= 1.0:
            raise ValueError("accumulator_peak_threshold must lie in (0, 1]")


# -- detection files --------------------------------------------------------

def _parse_box(raw, where: str) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ParseError(f"{where}: box must be [x, y, w, h]")
    values = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ParseError(f"{where}: box values must be integers, got {raw!r}")
        values.append(int(v))
    x, y, w, h = values
    if w <= 0 or h <= 0:
        raise InvalidDetection(f"{where}: non-positive box size {raw!r}")
    if x < 0 or y < 0:
        raise InvalidDetection(f"{where}: negative box origin {raw!r}")
    return BoundingBox(x, y, w, h)


def parse_detections(records, require_confidence: bool = True) -> List[Tuple[str, List[Detection]]]:
    if not isinstance(records, list):
        raise ParseError("detection file must hold a JSON array")
    out = []
    for i, rec in enumerate(records):
        where = f"record {i}"
        if not isinstance(rec, dict) or "image_id" not in rec or "detections" not in rec:
            raise ParseError(f"{where}: expected keys 'image_id' and 'detections'")
        if not isinstance(rec["image_id"], str) or not isinstance(rec["detections"], list):
            raise ParseError(f"{where}: bad image_id or detections type")
        dets = []
        for j, d in enumerate(rec["detections"]):
            dwhere = f"{where} detection {j}"
            if not isinstance(d, dict) or "box" not in d:
                raise ParseError(f"{dwhere}: missing 'box'")
            box = _parse_box(d["box"], dwhere)
            if "confidence" in d:
                conf = d["confidence"]
                if isinstance(conf, bool) or not isinstance(conf, (int, float)):
                    raise ParseError(f"{dwhere}: confidence must be a number")
            elif require_confidence:
                raise ParseError(f"{dwhere}: missing 'confidence'")
            else:
                conf = 1.0
            if not 0.0 <= conf <= 1.0:
                raise InvalidDetection(f"{dwhere}: confidence {conf} outside [0, 1]")
            label = d.get("class", DEFAULT_CLASS)
            if not isinstance(label, str):
                raise ParseError(f"{dwhere}: class must be a string")
            dets.append(Detection(box, conf, label))
        out.append((rec["image_id"], dets))
    return out


def load_detections(path, require_confidence: bool = True) -> List[Tuple[str, List[Detection]]]:
    """Read a detection JSON file into ``(image_id, detections)`` pairs."""
    try:
        text = Path(path).read_text(encoding="utf-8")
        records = json.loads(text)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return parse_detections(records, require_confidence)


def detections_to_json(items: Sequence[Tuple[str, Sequence[Detection]]]) -> list:
    return [{"image_id": image_id, "detections": [d.to_json() for d in dets]}
            for image_id, dets in items]


def save_detections(path, items) -> None:
    Path(path).write_text(json.dumps(detections_to_json(items), indent=2), encoding="utf-8")


def detections_by_image(items) -> Dict[str, List[Detection]]:
    merged: Dict[str, List[Detection]] = {}
    for image_id, dets in items:
        merged.setdefault(image_id, []).extend(dets)
    return merged


# -- filtering --------------------------------------------------------------

def filter_and_nms(dets: Sequence[Detection], cfg: DetectionFilterConfig = DetectionFilterConfig()):
    """Drop low-confidence boxes, then greedy IoU suppression.

    Survivors come back in descending confidence; equal confidences keep
    their input order.
    """
    ranked = sorted((d for d in dets if d.confidence >= cfg.confidence_threshold),
                    key=lambda d: -d.confidence)
    kept: List[Detection] = []
    for det in ranked:
        if all(box_iou(det.box, k.box) <= cfg.nms_iou_threshold for k in kept):
            kept.append(det)
    return kept


# -- circular Hough transform ----------------------------------------------

_WINDOW = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]

# 3x3 Sobel on a digitised circle only produces a coarse set of directions,
# so finer sectors cannot all be filled even by an ideal disc.
DIRECTION_SECTORS = 16


def edge_map(img) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sobel gradients scaled to intensity units per pixel."""
    src = np.asarray(img, dtype=np.float64)
    gx = ndimage.sobel(src, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(src, axis=0, mode="nearest") / 8.0
    return gx, gy, np.hypot(gx, gy)


def hough_scores(img, cfg: ChtConfig):
    """Per-radius accumulators.

    Every edge pixel votes for the center lying ``r`` pixels up its gradient
    (bright objects on a darker background). A vote spreads over the 3x3 cells
    around the rounded center, and a cell's coverage counts the distinct
    gradient-direction sectors that reached it, so the theoretical maximum is
    ``DIRECTION_SECTORS`` at every radius. ``raw`` keeps unspread vote counts for
    ranking among equally covered candidates.
    """
    img = as_gray_image(img)
    h, w = img.shape
    gx, gy, mag = edge_map(img)
    ys, xs = np.nonzero(mag >= cfg.edge_magnitude_threshold)
    radii = np.arange(cfg.min_radius, cfg.max_radius + 1)
    coverage = np.zeros((radii.size, h, w), dtype=np.int32)
    raw = np.zeros((radii.size, h, w), dtype=np.int32)
    if ys.size == 0:
        return radii, coverage, raw
    ux = gx[ys, xs] / mag[ys, xs]
    uy = gy[ys, xs] / mag[ys, xs]
    theta = np.arctan2(uy, ux)
    for k, r in enumerate(radii):
        n_bins = DIRECTION_SECTORS
        bins = np.floor((theta + np.pi) / (2 * np.pi) * n_bins).astype(np.int64) % n_bins
        cx = np.floor(xs + r * ux + 0.5).astype(np.int64)
        cy = np.floor(ys + r * uy + 0.5).astype(np.int64)
        inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        raw[k] = np.bincount(cy[inside] * w + cx[inside], minlength=h * w).reshape(h, w)
        keys = []
        for dy, dx in _WINDOW:
            vy, vx = cy + dy, cx + dx
            ok = (vx >= 0) & (vx < w) & (vy >= 0) & (vy < h)
            keys.append(((vy[ok] * w + vx[ok]) * n_bins) + bins[ok])
        cells = np.unique(np.concatenate(keys)) // n_bins
        coverage[k] = np.bincount(cells, minlength=h * w).reshape(h, w)
    return radii, coverage, raw


def cht_detect(img, cfg: ChtConfig = ChtConfig()) -> List[Detection]:
    img = as_gray_image(img)
    h, w = img.shape
    side = 2 * cfg.max_radius + 1
    if h < side or w < side:
        raise ImageTooSmall(f"image {w}x{h} smaller than {side}x{side}")
    radii, coverage, raw = hough_scores(img, cfg)

    candidates = []
    for k, r in enumerate(radii):
        n_bins = DIRECTION_SECTORS
        need = cfg.accumulator_peak_threshold * n_bins
        ys, xs = np.nonzero(coverage[k] >= need)
        for y, x in zip(ys.tolist(), xs.tolist()):
            c = int(coverage[k, y, x])
            candidates.append((c / n_bins, int(raw[k, y, x]), y, x, int(r)))
    # strongest first; equal peaks resolved by lowest (y, x, r)
    candidates.sort(key=lambda c: (-c[0], -c[1], c[2], c[3], c[4]))

    kept = []
    for conf, _, y, x, r in candidates:
        if any((y - ky) ** 2 + (x - kx) ** 2 <= max(r, kr) ** 2 for _, ky, kx, kr in kept):
            continue
        kept.append((conf, y, x, r))

    dets = []
    for conf, y, x, r in kept:
        box = BoundingBox.from_corners(max(0, x - r), max(0, y - r),
                                       min(w, x + r + 1), min(h, y + r + 1))
        dets.append(Detection(box, min(1.0, conf)))
    return dets


def circle_of(det: Detection) -> Tuple[float, float, float]:
    """Center (x, y) and radius implied by an unclipped CHT box."""
    b = det.box
    return b.x + (b.w - 1) / 2.0, b.y + (b.h - 1) / 2.0, (min(b.w, b.h) - 1) / 2.0
