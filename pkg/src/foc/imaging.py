"""Pixel-level data model and pre-processing.

Images are plain 2-D ``uint8`` numpy arrays indexed ``[row, col]``. A binary
mask is the same kind of array restricted to the values 0 and 255, where 255
marks a foreign-object pixel. Boxes and polygons use ``(x, y)`` = (column, row).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DegeneratePolygon,
    DimensionMismatch,
    OutOfBounds,
    ParseError,
    ValueOutOfRange,
)

POSITIVE = 255
NEGATIVE = 0


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"box.{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.x < 0 or self.y < 0:
            raise ValueError(f"box origin must be non-negative: {self}")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box size must be positive: {self}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def center(self) -> Tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self) -> int:
        return self.w * self.h

    def fits(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height

    def as_list(self):
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_corners(cls, x1, y1, x2, y2) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0, min(a.x2, b.x2) - max(a.x, b.x))
    iy = max(0, min(a.y2, b.y2) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def expand_box(box: BoundingBox, margin: int, width: int, height: int) -> BoundingBox:
    """Grow ``box`` by ``margin`` on every side, clamped to the image extent."""
    x1 = max(0, box.x - margin)
    y1 = max(0, box.y - margin)
    x2 = min(width, box.x2 + margin)
    y2 = min(height, box.y2 + margin)
    return BoundingBox.from_corners(x1, y1, x2, y2)


def mask_bbox(mask: np.ndarray) -> BoundingBox | None:
    """Tight box around the positive pixels, or None for an empty mask."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return None
    return BoundingBox.from_corners(int(cols.min()), int(rows.min()),
                                    int(cols.max()) + 1, int(rows.max()) + 1)


@dataclass(frozen=True)
class Polygon:
    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise DegeneratePolygon(f"polygon needs at least 3 vertices, got {len(verts)}")
        for i, v in enumerate(verts):
            if v == verts[(i + 1) % len(verts)]:
                raise DegeneratePolygon(f"consecutive duplicate vertex {v} at index {i}")
        object.__setattr__(self, "vertices", verts)

    def __len__(self):
        return len(self.vertices)

    def centroid(self) -> Tuple[float, float]:
        """Area centroid; falls back to the vertex mean for zero-area polygons."""
        xs = np.array([v[0] for v in self.vertices])
        ys = np.array([v[1] for v in self.vertices])
        xn, yn = np.roll(xs, -1), np.roll(ys, -1)
        cross = xs * yn - xn * ys
        area = cross.sum() / 2.0
        if abs(area) < 1e-12:
            return float(xs.mean()), float(ys.mean())
        cx = ((xs + xn) * cross).sum() / (6.0 * area)
        cy = ((ys + yn) * cross).sum() / (6.0 * area)
        return float(cx), float(cy)


@dataclass(frozen=True)
class PreprocessConfig:
    target_width: int = 512
    target_height: int = 512

    def __post_init__(self):
        if self.target_width < 32 or self.target_height < 32:
            raise ValueError("target size must be at least 32x32")


def round_half_up(values) -> np.ndarray:
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def to_gray(values) -> np.ndarray:
    """Round half-up, clamp to [0, 255] and cast to uint8."""
    return np.clip(round_half_up(values), 0, 255).astype(np.uint8)


def as_gray_image(arr) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueOutOfRange("image intensities must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def as_binary_mask(arr) -> np.ndarray:
    arr = as_gray_image(arr)
    if not np.isin(arr, (NEGATIVE, POSITIVE)).all():
        raise ValueOutOfRange("binary mask values must be exactly 0 or 255")
    return arr


def mask_from_bool(flags) -> np.ndarray:
    return np.where(np.asarray(flags, dtype=bool), POSITIVE, NEGATIVE).astype(np.uint8)


def normalize_minmax(img) -> np.ndarray:
    """Affine stretch to the full [0, 255] range; a constant image maps to zeros."""
    img = as_gray_image(img)
    lo, hi = int(img.min()), int(img.max())
    if lo == hi:
        return np.zeros_like(img)
    scaled = (img.astype(np.float64) - lo) * 255.0 / (hi - lo)
    return to_gray(scaled)


def _center_samples(n_in: int, n_out: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_to(img, width: int, height: int) -> np.ndarray:
    """Bilinear resize sampled at output-pixel centers."""
    img = as_gray_image(img)
    h, w = img.shape
    if (w, h) == (width, height):
        return img.copy()
    y0, y1, fy = _center_samples(h, height)
    x0, x1, fx = _center_samples(w, width)
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    return to_gray(top * (1 - fy)[:, None] + bottom * fy[:, None])


def resize_mask_to(mask, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resize; keeps the {0, 255} domain."""
    mask = as_binary_mask(mask)
    h, w = mask.shape
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.intp), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.intp), w - 1)
    return mask[rows][:, cols].copy()


def resize(img, cfg: PreprocessConfig) -> np.ndarray:
    return resize_to(img, cfg.target_width, cfg.target_height)


def resize_mask(mask, cfg: PreprocessConfig) -> np.ndarray:
    return resize_mask_to(mask, cfg.target_width, cfg.target_height)


def preprocess(img, cfg: PreprocessConfig) -> np.ndarray:
    return resize(normalize_minmax(img), cfg)


def _check_box(box: BoundingBox, shape) -> None:
    h, w = shape
    if not box.fits(w, h):
        raise OutOfBounds(f"{box} exceeds image extent {w}x{h}")


def crop_roi(img, box: BoundingBox) -> np.ndarray:
    img = np.asarray(img)
    _check_box(box, img.shape)
    return img[box.y:box.y2, box.x:box.x2].copy()


def merge_roi(base, roi, box: BoundingBox) -> np.ndarray:
    base = np.asarray(base)
    roi = np.asarray(roi)
    if roi.shape != (box.h, box.w):
        raise DimensionMismatch(f"roi shape {roi.shape} does not match box {box.h}x{box.w}")
    _check_box(box, base.shape)
    out = base.copy()
    out[box.y:box.y2, box.x:box.x2] = roi
    return out


def rasterize_polygon(poly: Polygon | Sequence, width: int, height: int) -> np.ndarray:
    """Even-odd fill: a pixel is positive iff its center lies inside ``poly``."""
    if not isinstance(poly, Polygon):
        poly = Polygon(tuple(map(tuple, poly)))
    px = np.arange(width) + 0.5
    py = (np.arange(height) + 0.5)[:, None]
    inside = np.zeros((height, width), dtype=bool)
    verts = poly.vertices
    for (x1, y1), (x2, y2) in zip(verts, verts[1:] + verts[:1]):
        if y1 == y2:
            continue
        straddles = (y1 > py) != (y2 > py)
        x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (px < x_cross)
    return mask_from_bool(inside)


def binarize(prob, threshold: float = 0.5) -> np.ndarray:
    """Positive (255) where ``prob >= threshold``."""
    prob = np.asarray(prob, dtype=np.float64)
    if not 0.0 < threshold < 1.0:
        raise ValueOutOfRange(f"threshold must lie in (0, 1), got {threshold}")
    if prob.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D probability grid, got shape {prob.shape}")
    if not np.all((prob >= 0.0) & (prob <= 1.0)):
        raise ValueOutOfRange("probabilities must lie in [0, 1]")
    return mask_from_bool(prob >= threshold)


# -- file I/O ---------------------------------------------------------------

IMAGE_SUFFIXES = (".png", ".pgm")


def read_raw(path) -> Image.Image:
    path = Path(path)
    try:
        im = Image.open(path)
        im.load()
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ParseError(f"cannot decode {path}: {exc}") from exc
    return im


def read_image(path) -> np.ndarray:
    """Load a grayscale PNG or PGM as uint8. 16-bit inputs are scaled down."""
    im = read_raw(path)
    if im.mode == "L":
        return np.asarray(im, dtype=np.uint8).copy()
    if im.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(im, dtype=np.float64)
        return to_gray(arr * 255.0 / 65535.0)
    return np.asarray(im.convert("L"), dtype=np.uint8).copy()


def write_image(path, img) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = as_gray_image(img)
    fmt = "PPM" if path.suffix.lower() == ".pgm" else "PNG"
    Image.fromarray(img).save(path, format=fmt)


def write_mask(path, mask) -> None:
    write_image(path, as_binary_mask(mask))


def list_images(directory) -> list:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)

