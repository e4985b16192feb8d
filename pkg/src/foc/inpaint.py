"""Fast-marching inpainting of masked foreign-object pixels.

Masked pixels are ordered by their arrival time from the mask boundary
(first-order upwind solution of ``|grad T| = 1``) and filled one by one with a
normalized weighted sum of the already-valued pixels within ``radius_T``.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, MaskTooSmall, NoKnownNeighbors
from .imaging import (
    BoundingBox,
    as_binary_mask,
    as_gray_image,
    crop_roi,
    expand_box,
    merge_roi,
    to_gray,
)

KNOWN, BAND, INSIDE = 0, 1, 2
EPS = 1e-6

_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True)
class InpaintConfig:
    radius_T: int = 5

    def __post_init__(self):
        if int(self.radius_T) != self.radius_T or self.radius_T < 1:
            raise ValueError("radius_T must be an integer >= 1")


@dataclass
class DistanceField:
    distance: np.ndarray  # 0 on unmasked pixels, inf where unreachable
    state: np.ndarray
    order: np.ndarray  # (n, 2) rows of (y, x) in freezing order
    frozen_at: np.ndarray  # distance of each pixel in ``order``

    @property
    def shape(self):
        return self.distance.shape


def solve_upwind(a: float, b: float) -> float:
    """First-order Eikonal update from the smaller neighbor value on each axis."""
    if math.isfinite(a) and math.isfinite(b) and abs(a - b) < 1.0:
        d = a - b
        return (a + b + math.sqrt(2.0 - d * d)) / 2.0
    return min(a, b) + 1.0


def fmm_distance(mask) -> DistanceField:
    """Arrival times over the masked region, seeded by the unmasked pixels at 0.

    Only frozen (Known) neighbors feed the update, so the freezing sequence is
    non-decreasing. Heap ties resolve by (y, x).
    """
    mask = as_binary_mask(mask)
    h, w = mask.shape
    if h < 3 or w < 3:
        raise MaskTooSmall(f"mask {w}x{h} is smaller than 3x3")
    inside = mask > 0
    dist = np.where(inside, np.inf, 0.0)
    state = np.where(inside, INSIDE, KNOWN).astype(np.int8)
    T = dist.tolist()
    S = state.tolist()

    def update(y, x):
        a = b = math.inf
        if x > 0 and S[y][x - 1] == KNOWN:
            a = T[y][x - 1]
        if x + 1 < w and S[y][x + 1] == KNOWN:
            a = min(a, T[y][x + 1])
        if y > 0 and S[y - 1][x] == KNOWN:
            b = T[y - 1][x]
        if y + 1 < h and S[y + 1][x] == KNOWN:
            b = min(b, T[y + 1][x])
        return solve_upwind(a, b)

    heap: List[Tuple[float, int, int]] = []
    ys, xs = np.nonzero(inside)
    for y, x in zip(ys.tolist(), xs.tolist()):
        if any(0 <= y + dy < h and 0 <= x + dx < w and S[y + dy][x + dx] == KNOWN
               for dy, dx in _NEIGHBORS):
            T[y][x] = update(y, x)
            S[y][x] = BAND
            heapq.heappush(heap, (T[y][x], y, x))

    order: List[Tuple[int, int]] = []
    frozen: List[float] = []
    while heap:
        t, y, x = heapq.heappop(heap)
        if S[y][x] == KNOWN or t != T[y][x]:
            continue
        S[y][x] = KNOWN
        order.append((y, x))
        frozen.append(t)
        for dy, dx in _NEIGHBORS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and S[ny][nx] != KNOWN:
                cand = update(ny, nx)
                if cand < T[ny][nx]:
                    T[ny][nx] = cand
                    S[ny][nx] = BAND
                    heapq.heappush(heap, (cand, ny, nx))

    return DistanceField(
        distance=np.array(T, dtype=np.float64),
        state=np.array(S, dtype=np.int8),
        order=np.array(order, dtype=np.intp).reshape(-1, 2),
        frozen_at=np.array(frozen, dtype=np.float64),
    )


def _known_gradient(img: np.ndarray, known: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Central differences using unmasked samples only; zero where undefined."""
    src = img.astype(np.float64)
    gx = np.zeros_like(src)
    gy = np.zeros_like(src)
    ok_x = known[:, :-2] & known[:, 2:]
    gx[:, 1:-1] = np.where(ok_x, (src[:, 2:] - src[:, :-2]) / 2.0, 0.0)
    ok_y = known[:-2, :] & known[2:, :]
    gy[1:-1, :] = np.where(ok_y, (src[2:, :] - src[:-2, :]) / 2.0, 0.0)
    return gx, gy


def _offsets(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    r = int(radius)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = (dy * dy + dx * dx <= r * r) & ((dy != 0) | (dx != 0))
    return dy[keep], dx[keep]


def telea_inpaint(img, mask, cfg: InpaintConfig = InpaintConfig()) -> np.ndarray:
    img = as_gray_image(img)
    mask = as_binary_mask(mask)
    if img.shape != mask.shape:
        raise DimensionMismatch(f"image {img.shape} and mask {mask.shape} differ")
    masked = mask > 0
    if not masked.any():
        return img.copy()
    if masked.all():
        raise NoKnownNeighbors("mask covers the entire image")
    field = fmm_distance(mask)
    h, w = img.shape

    T = field.distance
    ny, nx = np.gradient(T)
    norm = np.hypot(nx, ny)
    norm[norm == 0] = 1.0
    nx, ny = nx / norm, ny / norm

    gx, gy = _known_gradient(img, ~masked)
    values = img.astype(np.float64)
    valued = ~masked
    ody, odx = _offsets(cfg.radius_T)

    for y, x in field.order.tolist():
        qy = y + ody
        qx = x + odx
        inb = (qy >= 0) & (qy < h) & (qx >= 0) & (qx < w)
        qy, qx = qy[inb], qx[inb]
        sel = valued[qy, qx]
        qy, qx = qy[sel], qx[sel]
        if qy.size == 0:
            raise NoKnownNeighbors(f"pixel ({x}, {y}) has no valued neighbor within radius")
        # vector from q to p
        vx = (x - qx).astype(np.float64)
        vy = (y - qy).astype(np.float64)
        d2 = vx * vx + vy * vy
        dist = np.sqrt(d2)
        direction = np.maximum(EPS, (vx * nx[y, x] + vy * ny[y, x]) / dist)
        level = 1.0 / (1.0 + np.abs(T[y, x] - T[qy, qx]))
        weight = direction * level / d2
        neighbor = values[qy, qx]
        estimate = neighbor + gx[qy, qx] * vx + gy[qy, qx] * vy
        filled = float((weight * estimate).sum() / weight.sum())
        values[y, x] = min(max(filled, neighbor.min()), neighbor.max())
        valued[y, x] = True

    out = img.copy()
    out[masked] = to_gray(values[masked])
    return out


def inpaint_objects(img, masks: Sequence[Tuple[BoundingBox, np.ndarray]],
                    cfg: InpaintConfig = InpaintConfig()) -> np.ndarray:
    """Inpaint each (box, ROI mask) pair in turn and merge the result back.

    Each ROI is widened by ``radius_T`` on every side (clamped to the image)
    so the fill never runs short of known pixels at the crop edge.
    """
    out = as_gray_image(img).copy()
    h, w = out.shape
    for box, roi_mask in masks:
        roi_mask = as_binary_mask(roi_mask)
        if roi_mask.shape != (box.h, box.w):
            raise DimensionMismatch(f"mask {roi_mask.shape} does not match box {box}")
        if not box.fits(w, h):
            crop_roi(out, box)  # raises OutOfBounds
        wide = expand_box(box, int(cfg.radius_T), w, h)
        wide_mask = np.zeros((wide.h, wide.w), dtype=np.uint8)
        oy, ox = box.y - wide.y, box.x - wide.x
        wide_mask[oy:oy + box.h, ox:ox + box.w] = roi_mask
        patch = telea_inpaint(crop_roi(out, wide), wide_mask, cfg)
        out = merge_roi(out, patch, wide)
    return out
