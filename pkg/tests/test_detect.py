import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foc.detect import (
    ChtConfig,
    Detection,
    DetectionFilterConfig,
    cht_detect,
    circle_of,
    filter_and_nms,
    load_detections,
    parse_detections,
    save_detections,
)
from foc.errors import ImageTooSmall, InvalidDetection, ParseError
from foc.imaging import BoundingBox, box_iou
from foc.synthetic import disc_mask


def det(x, y, w, h, conf):
    return Detection(BoundingBox(x, y, w, h), conf)


def write_json(path, data):
    path.write_text(json.dumps(data))
    return path


def test_load_single_record(tmp_path):
    p = write_json(tmp_path / "d.json", [{"image_id": "a", "detections": [
        {"box": [1, 2, 3, 4], "confidence": 0.9, "class": "foreign_object"}]}])
    (image_id, dets), = load_detections(p)
    assert image_id == "a"
    assert dets == [Detection(BoundingBox(1, 2, 3, 4), 0.9)]


def test_load_empty_detections(tmp_path):
    p = write_json(tmp_path / "d.json", [{"image_id": "a", "detections": []}])
    assert load_detections(p) == [("a", [])]
    assert load_detections(write_json(tmp_path / "e.json", [])) == []


def test_bad_confidence_is_value_error(tmp_path):
    p = write_json(tmp_path / "d.json", [{"image_id": "a", "detections": [
        {"box": [1, 2, 3, 4], "confidence": 1.5}]}])
    with pytest.raises(ValueError):
        load_detections(p)
    with pytest.raises(InvalidDetection):
        parse_detections([{"image_id": "a", "detections": [{"box": [1, 2, 0, 4], "confidence": 0.5}]}])


@pytest.mark.parametrize("records", [
    {"image_id": "a"},
    [{"image_id": "a"}],
    [{"image_id": "a", "detections": [{"box": [1, 2, 3], "confidence": 0.5}]}],
    [{"image_id": "a", "detections": [{"box": [1, 2, 3, 4]}]}],
    [{"image_id": 3, "detections": []}],
])
def test_malformed_records(records):
    with pytest.raises(ParseError):
        parse_detections(records)


def test_truncated_file(tmp_path):
    p = tmp_path / "d.json"
    p.write_text('[{"image_id": "a", "detec')
    with pytest.raises(ParseError):
        load_detections(p)


def test_ground_truth_may_omit_confidence():
    (_, dets), = parse_detections([{"image_id": "a", "detections": [{"box": [0, 0, 2, 2]}]}],
                                  require_confidence=False)
    assert dets[0].confidence == 1.0


def test_save_load_roundtrip(tmp_path):
    items = [("x", [det(1, 1, 3, 3, 0.5)]), ("y", [])]
    save_detections(tmp_path / "o.json", items)
    assert load_detections(tmp_path / "o.json") == items


def test_filter_examples():
    cfg = DetectionFilterConfig()
    assert filter_and_nms([det(0, 0, 4, 4, 0.29)], cfg) == []
    assert filter_and_nms([det(0, 0, 4, 4, 0.8), det(0, 0, 4, 4, 0.9)], cfg) == [det(0, 0, 4, 4, 0.9)]
    both = filter_and_nms([det(0, 0, 4, 4, 0.8), det(10, 10, 4, 4, 0.9)], cfg)
    assert [d.confidence for d in both] == [0.9, 0.8]


def test_filter_config_bounds():
    with pytest.raises(ValueError):
        DetectionFilterConfig(0.0, 0.6)
    with pytest.raises(ValueError):
        DetectionFilterConfig(0.3, 1.0)


boxes = st.builds(lambda x, y, w, h, c: det(x, y, w, h, c),
                  st.integers(0, 30), st.integers(0, 30), st.integers(1, 12), st.integers(1, 12),
                  st.floats(0, 1))


@given(st.lists(boxes, max_size=25), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_filter_properties(dets, conf, iou):
    cfg = DetectionFilterConfig(conf, iou)
    out = filter_and_nms(dets, cfg)
    assert all(d in dets for d in out)
    assert all(d.confidence >= conf for d in out)
    assert [d.confidence for d in out] == sorted((d.confidence for d in out), reverse=True)
    for i in range(len(out)):
        for j in range(i + 1, len(out)):
            assert box_iou(out[i].box, out[j].box) <= iou
    assert filter_and_nms(out, cfg) == out


def disc_image(size, discs, bg=40, fg=200):
    img = np.full((size, size), bg, np.uint8)
    for cx, cy, r in discs:
        img[disc_mask(size, size, cx, cy, r) > 0] = fg
    return img


def test_blank_image_has_no_detections():
    assert cht_detect(np.full((64, 64), 90, np.uint8)) == []


def test_single_disc():
    dets = cht_detect(disc_image(64, [(32, 32, 8)]))
    assert len(dets) == 1
    cx, cy, r = circle_of(dets[0])
    assert abs(cx - 32) <= 2 and abs(cy - 32) <= 2 and abs(r - 8) <= 2
    assert dets[0].confidence == 1.0


def test_two_discs_30px_apart():
    dets = cht_detect(disc_image(96, [(33, 48, 8), (63, 48, 8)]))
    assert len(dets) == 2
    centers = sorted(circle_of(d)[:2] for d in dets)
    assert abs(centers[0][0] - 33) <= 2 and abs(centers[1][0] - 63) <= 2


def test_image_too_small():
    with pytest.raises(ImageTooSmall):
        cht_detect(np.zeros((20, 40), np.uint8), ChtConfig(max_radius=10))


def test_cht_config_bounds():
    with pytest.raises(ValueError):
        ChtConfig(min_radius=0)
    with pytest.raises(ValueError):
        ChtConfig(min_radius=9, max_radius=8)


@pytest.mark.parametrize("dx,dy", [(1, 0), (0, 3), (-4, 2), (7, -5)])
def test_translation_equivariance(dx, dy):
    base = circle_of(cht_detect(disc_image(80, [(38, 40, 9)]))[0])
    moved = circle_of(cht_detect(disc_image(80, [(38 + dx, 40 + dy, 9)]))[0])
    assert abs(moved[0] - base[0] - dx) <= 1 and abs(moved[1] - base[1] - dy) <= 1


def test_dark_disc_is_ignored():
    # bright-object assumption: votes go up the gradient only
    assert cht_detect(disc_image(64, [(32, 32, 8)], bg=200, fg=40)) == []
