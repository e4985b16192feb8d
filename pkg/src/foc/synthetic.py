"""Synthetic radiograph-like scenes with pasted bright discs and known clean originals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .imaging import mask_from_bool, to_gray


@dataclass
class Scene:
    clean: np.ndarray
    dirty: np.ndarray
    discs: List[Tuple[int, int, int]]  # (cx, cy, r)
    contrasts: List[int]

    def object_masks(self) -> List[np.ndarray]:
        h, w = self.clean.shape
        return [disc_mask(h, w, cx, cy, r) for cx, cy, r in self.discs]

    def union_mask(self) -> np.ndarray:
        h, w = self.clean.shape
        out = np.zeros((h, w), dtype=bool)
        for cx, cy, r in self.discs:
            out |= disc_mask(h, w, cx, cy, r) > 0
        return out


def disc_mask(h: int, w: int, cx: float, cy: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[:h, :w]
    return mask_from_bool((xx - cx) ** 2 + (yy - cy) ** 2 <= r * r)


def smooth_background(rng: np.random.Generator, size: int, lo: float = 30.0,
                      hi: float = 150.0) -> np.ndarray:
    """A few long-wavelength sinusoids plus a ramp, rescaled into [lo, hi]."""
    yy, xx = np.mgrid[:size, :size] / float(size)
    field = rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy
    for _ in range(3):
        fx, fy = rng.uniform(0.3, 2.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        field = field + rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    field = (field - field.min()) / (np.ptp(field) or 1.0)
    return lo + (hi - lo) * field


def make_scene(rng: np.random.Generator, size: int = 512, n_objects: Tuple[int, int] = (1, 3),
               radius: Tuple[int, int] = (6, 12), contrast: Tuple[int, int] = (80, 110),
               margin: int = 24, gap: int = 12) -> Scene:
    """Smooth background with 1-3 non-overlapping bright discs pasted on top.

    Each disc is a constant intensity ``contrast`` levels above the background
    at its center.
    """
    bg = smooth_background(rng, size)
    clean = to_gray(bg)
    dirty = clean.copy()
    count = int(rng.integers(n_objects[0], n_objects[1] + 1))
    discs: List[Tuple[int, int, int]] = []
    contrasts: List[int] = []
    while len(discs) < count:
        r = int(rng.integers(radius[0], radius[1] + 1))
        cx, cy = (int(v) for v in rng.integers(margin + r, size - margin - r, size=2))
        if any((cx - x) ** 2 + (cy - y) ** 2 < (r + rr + gap) ** 2 for x, y, rr in discs):
            continue
        c = int(rng.integers(contrast[0], contrast[1] + 1))
        dirty[disc_mask(size, size, cx, cy, r) > 0] = min(255, int(clean[cy, cx]) + c)
        discs.append((cx, cy, r))
        contrasts.append(c)
    return Scene(clean, dirty, discs, contrasts)


def make_suite(seed: int, count: int = 50, **kwargs) -> List[Scene]:
    rng = np.random.default_rng(seed)
    return [make_scene(rng, **kwargs) for _ in range(count)]


def normalize_like(img, reference) -> np.ndarray:
    """Apply the min-max stretch that ``reference`` would receive to ``img``."""
    ref = np.asarray(reference)
    lo, hi = int(ref.min()), int(ref.max())
    if lo == hi:
        return np.zeros_like(np.asarray(img))
    return to_gray((np.asarray(img, dtype=np.float64) - lo) * 255.0 / (hi - lo))


def object_residuals(output, clean, masks: Sequence[np.ndarray]) -> List[Tuple[float, float]]:
    """(mean, max) absolute difference inside each object mask."""
    diff = np.abs(np.asarray(output, dtype=np.float64) - np.asarray(clean, dtype=np.float64))
    return [(float(diff[m > 0].mean()), float(diff[m > 0].max())) for m in masks]


def judge_removed(output, clean, masks: Sequence[np.ndarray], mean_tol: float = 5.0,
                  max_tol: float = 40.0) -> bool:
    """True when every object region matches the clean image closely.

    ``max_tol`` catches leftover object pixels that a mean would dilute.
    """
    return all(mean <= mean_tol and peak <= max_tol
               for mean, peak in object_residuals(output, clean, masks))
