"""Per-object binary masks from external probability maps or a classical fallback."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, ParseError, RoiTooSmall, UnsupportedBitDepth
from .imaging import as_binary_mask, as_gray_image, binarize, mask_from_bool, read_raw

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SegmentConfig:
    binarize_threshold: float = 0.5
    keep_largest_component_only: bool = True

    def __post_init__(self):
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")


def probmap_name(image_id: str, index: int, suffix: str = ".png") -> str:
    return f"{image_id}__obj{index}{suffix}"


def find_probmap(directory, image_id: str, index: int) -> Path:
    directory = Path(directory)
    for suffix in (".png", ".pgm"):
        candidate = directory / probmap_name(image_id, index, suffix)
        if candidate.exists():
            return candidate
    raise FileNotFoundError(directory / probmap_name(image_id, index))


def load_probability_map(path) -> np.ndarray:
    """Read an 8- or 16-bit grayscale file as float values in [0, 1]."""
    im = read_raw(path)
    if im.mode == "L":
        scale = 255.0
    elif im.mode in ("I;16", "I;16B", "I;16L"):
        scale = 65535.0
    elif im.mode == "I":
        # Pillow widens 16-bit PNGs to 32-bit ints
        scale = 65535.0
    else:
        raise UnsupportedBitDepth(f"{path}: unsupported image mode {im.mode!r}")
    data = np.asarray(im, dtype=np.float64)
    if data.ndim != 2:
        raise ParseError(f"{path}: expected a single-channel image")
    if data.min() < 0 or data.max() > scale:
        raise UnsupportedBitDepth(f"{path}: values exceed 16-bit range")
    return data / scale


def otsu_threshold(values) -> Optional[int]:
    """Otsu threshold on an 8-bit histogram.

    Returns ``t`` such that the classes are ``<= t`` and ``> t``, or None when
    the input holds a single intensity. Scores are compared as exact rationals;
    the lowest maximizing ``t`` wins.
    """
    hist = np.bincount(np.asarray(values, dtype=np.uint8).ravel(), minlength=256)
    total = int(hist.sum())
    weighted_total = int((hist * np.arange(256)).sum())
    best, best_t = None, None
    n1 = s1 = 0
    for t in range(255):
        n1 += int(hist[t])
        s1 += t * int(hist[t])
        n2 = total - n1
        if n1 == 0 or n2 == 0:
            continue
        # between-class variance up to the constant factor 1 / total**4
        score = Fraction((total * s1 - n1 * weighted_total) ** 2, n1 * n2)
        if best is None or score > best:
            best, best_t = score, t
    return best_t


def largest_component(mask) -> np.ndarray:
    """Keep only the largest 8-connected positive component.

    Ties go to the component whose first pixel in raster order comes first.
    """
    mask = as_binary_mask(mask)
    labels, count = ndimage.label(mask > 0, structure=EIGHT_CONNECTED)
    if count <= 1:
        return mask.copy()
    # ndimage numbers components in raster order of their first pixel
    sizes = np.bincount(labels.ravel())[1:]
    winner = int(np.argmax(sizes)) + 1
    return mask_from_bool(labels == winner)


def fallback_segment(roi, cfg: SegmentConfig = SegmentConfig()) -> np.ndarray:
    """Otsu split of an ROI, keeping the bright side as the object."""
    roi = as_gray_image(roi)
    if roi.shape[0] < 4 or roi.shape[1] < 4:
        raise RoiTooSmall(f"roi {roi.shape[1]}x{roi.shape[0]} is smaller than 4x4")
    t = otsu_threshold(roi)
    if t is None:
        return np.zeros_like(roi)
    mask = mask_from_bool(roi > t)
    if cfg.keep_largest_component_only:
        mask = largest_component(mask)
    return mask


def segment_probability(prob, roi_shape, cfg: SegmentConfig = SegmentConfig()) -> np.ndarray:
    prob = np.asarray(prob, dtype=np.float64)
    if prob.shape != tuple(roi_shape):
        raise DimensionMismatch(f"probability map {prob.shape} does not match roi {tuple(roi_shape)}")
    mask = binarize(prob, cfg.binarize_threshold)
    if cfg.keep_largest_component_only:
        mask = largest_component(mask)
    return mask
