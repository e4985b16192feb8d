import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foc.detect import Detection
from foc.errors import DimensionMismatch, EmptyInput, NoObjects, ZeroGroundTruth
from foc.imaging import BoundingBox, box_iou
from foc.metrics import (
    CountPair,
    CompletenessReport,
    DetectionEvalResult,
    average_precision_50,
    avg_dice,
    completeness_report,
    evaluate_detection_set,
    evaluate_detections,
    f1_score,
    lung_filter,
    match_objects,
    mdoc,
    overlap_metrics,
    ranked_pr_curve,
)

from . import oracles


def mask(shape, cells):
    m = np.zeros(shape, np.uint8)
    for y, x in cells:
        m[y, x] = 255
    return m


def test_overlap_examples():
    a = mask((4, 4), [(0, 0), (0, 1), (1, 0), (1, 1)])
    assert overlap_metrics(a, a) == (1.0, 1.0, 1.0)
    b = mask((4, 4), [(2, 2), (2, 3), (3, 2), (3, 3)])
    assert overlap_metrics(a, b) == (0.0, 0.0, 0.5)
    c = mask((4, 4), [(0, 0), (0, 1), (3, 0), (3, 1)])
    d, iou, _ = overlap_metrics(a, c)
    assert d == 0.5 and iou == pytest.approx(1 / 3)
    empty = np.zeros((3, 3), np.uint8)
    assert overlap_metrics(empty, empty) == (1.0, 1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        overlap_metrics(empty, np.zeros((3, 4), np.uint8))


def test_mdoc_examples():
    assert mdoc([CountPair(3, 3), CountPair(2, 2)]) == 0.0
    assert mdoc([CountPair(3, 2), CountPair(2, 2)]) == pytest.approx(0.2, abs=1e-12)
    assert mdoc([CountPair(1, 3)]) == pytest.approx(-2.0, abs=1e-12)
    with pytest.raises(ZeroGroundTruth):
        mdoc([CountPair(0, 4)])
    with pytest.raises(ValueError):
        CountPair(-1, 0)


pair_lists = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=10)


@given(pair_lists, pair_lists)
def test_mdoc_linear(xs, ys):
    cx, cy = sum(c for c, _ in xs), sum(c for c, _ in ys)
    if cx == 0 or cy == 0:
        return
    whole = mdoc(xs + ys)
    assert whole == pytest.approx((cx * mdoc(xs) + cy * mdoc(ys)) / (cx + cy), abs=1e-12)


def test_avg_dice_examples():
    a = mask((4, 4), [(0, 0), (0, 1)])
    assert avg_dice([([a], [a.copy()])]) == 1.0
    half_gt = mask((4, 4), [(2, 0), (2, 1)])
    half_pred = mask((4, 4), [(2, 1), (2, 2)])
    assert avg_dice([([a, half_gt], [a.copy(), half_pred])]) == pytest.approx(0.75)
    assert avg_dice([([a], [])]) == 0.0
    with pytest.raises(NoObjects):
        avg_dice([([], [])])


def test_unmatched_predictions_count_too():
    a = mask((4, 4), [(0, 0)])
    extra = mask((4, 4), [(3, 3)])
    assert avg_dice([([a], [a.copy(), extra])]) == pytest.approx(0.5)


def test_greedy_matching_prefers_best_pair():
    g0 = mask((1, 6), [(0, 0), (0, 1), (0, 2)])
    g1 = mask((1, 6), [(0, 3), (0, 4)])
    p0 = mask((1, 6), [(0, 2), (0, 3), (0, 4)])
    matches, ug, up = match_objects([g0, g1], [p0])
    assert matches == [(1, 0, pytest.approx(0.8))] and ug == [0] and up == []


def test_avg_dice_matches_greedy_oracle():
    rng = np.random.default_rng(21)
    for _ in range(60):
        samples = []
        for _ in range(int(rng.integers(1, 4))):
            gts = [(rng.random((6, 6)) < 0.3).astype(np.uint8) * 255 for _ in range(rng.integers(0, 4))]
            preds = [(rng.random((6, 6)) < 0.3).astype(np.uint8) * 255 for _ in range(rng.integers(0, 4))]
            samples.append((gts, preds))
        if not any(g or p for g, p in samples):
            continue
        assert avg_dice(samples) == pytest.approx(oracles.avg_dice(samples), abs=1e-9)


def test_evaluate_detection_examples():
    gts = [BoundingBox(0, 0, 4, 4), BoundingBox(10, 10, 4, 4)]
    r = evaluate_detections([Detection(b, 0.9) for b in gts], gts)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)
    # IoU 0.4 against the only ground truth
    pred, gt = BoundingBox(0, 0, 4, 5), BoundingBox(2, 0, 3, 5)
    assert box_iou(pred, gt) == pytest.approx(0.4)
    low = evaluate_detections([Detection(pred, 0.9)], [gt])
    assert (low.tp, low.fp, low.fn) == (0, 1, 1) and low.f1 == 0.0


def test_f1_reported_values():
    assert f1_score(0.76, 0.70) == pytest.approx(0.7288, abs=1e-4)
    assert f1_score(0.0, 0.0) == 0.0
    assert DetectionEvalResult(0, 0, 0).precision == 0.0


def random_boxes(rng, n):
    return [BoundingBox(int(rng.integers(0, 20)), int(rng.integers(0, 20)),
                        int(rng.integers(2, 8)), int(rng.integers(2, 8))) for _ in range(n)]


def test_evaluate_counts_consistent():
    rng = np.random.default_rng(4)
    for _ in range(200):
        gts = random_boxes(rng, int(rng.integers(0, 6)))
        preds = [Detection(b, float(rng.random())) for b in random_boxes(rng, int(rng.integers(0, 6)))]
        r = evaluate_detections(preds, gts)
        assert r.tp + r.fn == len(gts) and r.tp + r.fp == len(preds)


def test_ap_examples(caplog):
    g = BoundingBox(0, 0, 4, 4)
    assert average_precision_50([(Detection(g, 0.9), "a")], [(g, "a")]) == 1.0
    ranked = [(Detection(BoundingBox(20, 20, 4, 4), 0.9), "a"), (Detection(g, 0.5), "a")]
    assert average_precision_50(ranked, [(g, "a")]) == pytest.approx(0.5)
    recall, precision = ranked_pr_curve(ranked, [(g, "a")])
    assert recall.tolist() == [0.0, 0.0, 1.0] and precision.tolist() == [0.0, 0.0, 0.5]
    assert average_precision_50([], [(g, "a")]) == 0.0
    with caplog.at_level(logging.WARNING):
        assert average_precision_50(ranked, []) == 0.0
    assert "no ground truths" in caplog.text


def random_instance(rng):
    images = [f"im{k}" for k in range(int(rng.integers(1, 6)))]
    n_gt = int(rng.integers(1, 11))
    n_pred = int(rng.integers(0, 21 - n_gt))
    gts = [(b, images[int(rng.integers(len(images)))]) for b in random_boxes(rng, n_gt)]
    preds = []
    for b in random_boxes(rng, n_pred):
        preds.append((Detection(b, float(rng.choice([0.2, 0.5, 0.8, rng.random()]))),
                      images[int(rng.integers(len(images)))]))
    # half the time, copy jittered ground truths in as predictions
    for b, img in gts:
        if rng.random() < 0.5 and len(preds) + n_gt < 20:
            jitter = BoundingBox(b.x + int(rng.integers(0, 2)), b.y, b.w, b.h)
            preds.append((Detection(jitter, float(rng.random())), img))
    return preds, gts


def test_ap_matches_prefix_walk():
    rng = np.random.default_rng(8)
    for _ in range(60):
        preds, gts = random_instance(rng)
        expect = oracles.ap_prefix_walk([(d.confidence, d.box.as_list(), i) for d, i in preds],
                                        [(b.as_list(), i) for b, i in gts])
        assert average_precision_50(preds, gts) == pytest.approx(expect, abs=1e-9)


def test_ap_order_invariant():
    rng = np.random.default_rng(10)
    for _ in range(30):
        preds, gts = random_instance(rng)
        shuffled = [preds[i] for i in rng.permutation(len(preds))]
        assert average_precision_50(shuffled, gts) == average_precision_50(preds, gts)


def test_detection_set_merges_images():
    g = BoundingBox(0, 0, 4, 4)
    r = evaluate_detection_set({"a": [Detection(g, 0.9)], "b": [Detection(g, 0.8)]},
                               {"a": [g], "c": [g]})
    assert (r.tp, r.fp, r.fn) == (1, 1, 1)
    assert r.map50 == pytest.approx(0.5)


def test_completeness():
    rep = completeness_report([(str(i), i < 428) for i in range(501)])
    assert (rep.total_images, rep.completely_inpainted, rep.percentage) == (501, 428, 85)
    assert completeness_report([("a", True), ("b", True)]).percentage == 100
    with pytest.raises(EmptyInput):
        completeness_report([])
    with pytest.raises(ValueError):
        CompletenessReport(3, 4)


def test_lung_filter():
    lung = np.zeros((20, 20), np.uint8)
    lung[:, :10] = 255
    inside, outside = BoundingBox(2, 2, 4, 4), BoundingBox(12, 2, 4, 4)
    assert lung_filter([inside, outside], lung) == [inside]
    assert lung_filter([Detection(outside, 0.5)], lung) == []


def test_metric_order_invariance():
    rng = np.random.default_rng(12)
    samples = [([(rng.random((5, 5)) < 0.4).astype(np.uint8) * 255 for _ in range(2)],
                [(rng.random((5, 5)) < 0.4).astype(np.uint8) * 255 for _ in range(2)])
               for _ in range(5)]
    assert avg_dice(samples) == pytest.approx(avg_dice(samples[::-1]), abs=1e-12)
    pairs = [CountPair(int(a), int(b)) for a, b in rng.integers(0, 5, (8, 2))] + [CountPair(1, 0)]
    assert mdoc(pairs) == pytest.approx(mdoc(pairs[::-1]), abs=1e-12)
