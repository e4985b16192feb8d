import math

import numpy as np
import pytest

from foc.errors import DimensionMismatch, MaskTooSmall, NoKnownNeighbors
from foc.imaging import BoundingBox, to_gray
from foc.inpaint import (
    BAND,
    INSIDE,
    KNOWN,
    InpaintConfig,
    fmm_distance,
    inpaint_objects,
    solve_upwind,
    telea_inpaint,
)
from foc.synthetic import disc_mask, smooth_background

from . import oracles


def hole(shape, cells):
    m = np.zeros(shape, np.uint8)
    for y, x in cells:
        m[y, x] = 255
    return m


def random_mask(rng, h, w, p):
    m = (rng.random((h, w)) < p).astype(np.uint8) * 255
    if m.all():
        m[rng.integers(h), rng.integers(w)] = 0
    return m


def test_upwind_quadratic():
    assert solve_upwind(0.0, 0.0) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert solve_upwind(0.0, math.inf) == 1.0
    assert solve_upwind(0.0, 1.0) == 1.0  # |a-b| = 1 falls back to min + 1
    assert solve_upwind(2.0, 2.5) == pytest.approx((4.5 + math.sqrt(2 - 0.25)) / 2)


def test_empty_mask_field():
    f = fmm_distance(np.zeros((4, 4), np.uint8))
    assert (f.distance == 0).all() and len(f.order) == 0
    assert not (f.state == INSIDE).any()


def test_single_pixel_hole():
    f = fmm_distance(hole((3, 3), [(1, 1)]))
    assert abs(f.distance[1, 1] - 1 / math.sqrt(2)) < 1e-9
    assert f.order.tolist() == [[1, 1]]
    assert set(np.unique(f.state)) == {KNOWN}


def test_strip_hole_against_dijkstra():
    m = hole((3, 7), [(1, x) for x in range(1, 6)])
    f = fmm_distance(m)
    assert np.abs(f.distance - oracles.dijkstra8(m)).max() <= 0.5


def test_mask_too_small():
    with pytest.raises(MaskTooSmall):
        fmm_distance(np.zeros((2, 5), np.uint8))


def test_every_masked_pixel_freezes_in_order():
    rng = np.random.default_rng(5)
    for _ in range(20):
        h, w = rng.integers(3, 25, size=2)
        m = random_mask(rng, h, w, rng.uniform(0.2, 0.95))
        f = fmm_distance(m)
        assert len(f.order) == np.count_nonzero(m)
        assert np.all(np.diff(f.frozen_at) >= 0)
        assert (f.distance[m == 0] == 0).all() and np.isfinite(f.distance).all()
        assert not (f.state == BAND).any()


def test_bracket_between_euclidean_and_four_neighbor_paths():
    rng = np.random.default_rng(9)
    for _ in range(40):
        h, w = rng.integers(3, 33, size=2)
        m = random_mask(rng, h, w, rng.uniform(0.3, 0.98))
        t = fmm_distance(m).distance
        assert (t >= oracles.euclidean(m) - 0.5 - 1e-9).all()
        assert (t <= oracles.dijkstra4(m) + 1e-9).all()


def test_point_seed_exceeds_eight_neighbor_path():
    # the first-order update is not bounded by the 8-neighbour graph metric:
    # diagonal to a lone seed it gives (1 + 1 + sqrt(2)) / 2 > sqrt(2)
    m = np.full((3, 3), 255, np.uint8)
    m[1, 1] = 0
    t = fmm_distance(m).distance
    assert t[0, 0] == pytest.approx((2 + math.sqrt(2)) / 2)
    assert t[0, 0] > oracles.dijkstra8(m)[0, 0]


def test_deterministic_tie_order():
    m = hole((5, 5), [(1, 1), (1, 3), (3, 1), (3, 3)])
    assert fmm_distance(m).order.tolist() == [[1, 1], [1, 3], [3, 1], [3, 3]]


# -- telea ------------------------------------------------------------------

def test_empty_mask_identity():
    img = np.random.default_rng(0).integers(0, 256, (9, 9), dtype=np.uint8)
    out = telea_inpaint(img, np.zeros_like(img))
    assert np.array_equal(out, img)


def test_constant_image_fill_exact():
    rng = np.random.default_rng(1)
    for _ in range(10):
        m = random_mask(rng, 12, 15, 0.6)
        out = telea_inpaint(np.full((12, 15), 100, np.uint8), m)
        assert (out == 100).all()


def test_hand_evaluated_center_hole():
    img = np.array([[25, 10, 25],
                    [20, 0, 30],
                    [25, 40, 25]], dtype=np.uint8)
    # symmetric distance field: N = 0, every weight is eps * 1 * lev, so the
    # result is the plain mean of the four 4-neighbours
    out = telea_inpaint(img, hole((3, 3), [(1, 1)]), InpaintConfig(1))
    assert out[1, 1] == 25


def test_single_hole_direct_formula():
    rng = np.random.default_rng(2)
    for _ in range(20):
        img = rng.integers(0, 256, (9, 9), dtype=np.uint8)
        img[4, 4] = 0
        m = hole((9, 9), [(4, 4)])
        src = img.astype(float)
        t_p = 1 / math.sqrt(2)
        num = den = 0.0
        lo, hi = math.inf, -math.inf
        for qy in range(9):
            for qx in range(9):
                vy, vx = 4 - qy, 4 - qx
                d2 = vx * vx + vy * vy
                if d2 == 0 or d2 > 4:
                    continue
                # central differences only where both sides are unmasked
                gx = (src[qy, qx + 1] - src[qy, qx - 1]) / 2 if 0 < qx < 8 and (qy, qx - 1) != (4, 4) \
                    and (qy, qx + 1) != (4, 4) else 0.0
                gy = (src[qy + 1, qx] - src[qy - 1, qx]) / 2 if 0 < qy < 8 and (qy - 1, qx) != (4, 4) \
                    and (qy + 1, qx) != (4, 4) else 0.0
                wgt = 1e-6 * (1 / d2) / (1 + t_p)
                num += wgt * (src[qy, qx] + gx * vx + gy * vy)
                den += wgt
                lo, hi = min(lo, src[qy, qx]), max(hi, src[qy, qx])
        expect = math.floor(min(max(num / den, lo), hi) + 0.5)
        assert telea_inpaint(img, m, InpaintConfig(2))[4, 4] == expect


def test_range_bound_against_valued_neighbors():
    rng = np.random.default_rng(3)
    for _ in range(30):
        h, w = rng.integers(6, 20, size=2)
        img = rng.integers(0, 256, (h, w), dtype=np.uint8)
        m = random_mask(rng, h, w, rng.uniform(0.1, 0.7))
        r = int(rng.integers(1, 5))
        out = telea_inpaint(img, m, InpaintConfig(r)).astype(int)
        valued = m == 0
        for y, x in fmm_distance(m).order.tolist():
            ys, xs = np.mgrid[:h, :w]
            near = ((ys - y) ** 2 + (xs - x) ** 2 <= r * r) & valued
            vals = out[near]
            assert vals.min() - 1 <= out[y, x] <= vals.max() + 1
            valued[y, x] = True
        assert np.array_equal(out[m == 0], img[m == 0])


def test_dimension_and_coverage_errors():
    with pytest.raises(DimensionMismatch):
        telea_inpaint(np.zeros((5, 5), np.uint8), np.zeros((5, 6), np.uint8))
    with pytest.raises(NoKnownNeighbors):
        telea_inpaint(np.zeros((5, 5), np.uint8), np.full((5, 5), 255, np.uint8))


def test_radius_validation():
    with pytest.raises(ValueError):
        InpaintConfig(0)


def scene(seed=4, size=64):
    rng = np.random.default_rng(seed)
    clean = to_gray(smooth_background(rng, size))
    return clean


@pytest.mark.parametrize("seed", [4, 8, 15])
def test_disc_on_smooth_background(seed):
    clean = scene(seed, 512)
    m = disc_mask(512, 512, 250, 270, 10)
    dirty = clean.copy()
    dirty[m > 0] = 250
    out = inpaint_objects(dirty, [roi_pair(m, BoundingBox(240, 260, 21, 21))])
    residual = np.abs(out.astype(float) - clean)[m > 0].mean()
    assert residual <= 5


def roi_pair(mask, box):
    return box, mask[box.y:box.y2, box.x:box.x2]


def test_inpaint_objects_empty_and_locality():
    clean = scene(5)
    assert np.array_equal(inpaint_objects(clean, []), clean)
    m = disc_mask(64, 64, 20, 20, 5)
    dirty = clean.copy()
    dirty[m > 0] = 255
    box = BoundingBox(15, 15, 11, 11)
    out = inpaint_objects(dirty, [roi_pair(m, box)], InpaintConfig(5))
    changed = np.argwhere(out != dirty)
    assert changed.size and (np.abs(changed - [20, 20]).max() <= 5)
    # nothing moves outside the mask itself
    assert np.array_equal(out[m == 0], dirty[m == 0])


def test_disjoint_objects_order_independent():
    clean = scene(6)
    a = disc_mask(64, 64, 14, 14, 5)
    b = disc_mask(64, 64, 48, 46, 6)
    dirty = clean.copy()
    dirty[(a | b) > 0] = 240
    pa = roi_pair(a, BoundingBox(9, 9, 11, 11))
    pb = roi_pair(b, BoundingBox(42, 40, 13, 13))
    assert np.array_equal(inpaint_objects(dirty, [pa, pb]), inpaint_objects(dirty, [pb, pa]))


def test_inpaint_objects_checks_shapes():
    img = np.zeros((10, 10), np.uint8)
    with pytest.raises(DimensionMismatch):
        inpaint_objects(img, [(BoundingBox(0, 0, 3, 3), np.zeros((2, 3), np.uint8))])
