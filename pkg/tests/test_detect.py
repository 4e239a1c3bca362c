import itertools
import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficpipe.detect import (BackgroundModel, DetectionFileError, bg_update, blob_detect,
                                connected_components, load_detections, nms, save_detections)
from trafficpipe.geometry import BBox, Detection, iou
from trafficpipe.videoio.color import to_gray
from trafficpipe.synth import ActorSpec, SceneSpec, generate


def _rec(seq, label="car", obj=0.9, x=0.0):
    return {"frame_seq": seq, "class_label": label, "x_min": x, "y_min": 0.0, "x_max": x + 5,
            "y_max": 5.0, "objectness": obj, "class_confidence": 0.8}


def _write(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs))
    return path


def test_load_groups_by_frame(tmp_path):
    p = _write(tmp_path / "d.jsonl", [_rec(0), _rec(0, x=10), _rec(3, "tuk-tuk")])
    out = load_detections(p)
    assert sorted(out) == [0, 3] and len(out[0]) == 2
    assert out[3][0].class_label == "tuk-tuk"


def test_load_reports_line(tmp_path):
    p = _write(tmp_path / "d.jsonl", [_rec(0), _rec(1, obj=1.5)])
    with pytest.raises(DetectionFileError) as e:
        load_detections(p)
    assert e.value.line_no == 2
    (tmp_path / "bad.jsonl").write_text('{"frame_seq": 0}\nnot json\n')
    with pytest.raises(DetectionFileError, match=":1:"):
        load_detections(tmp_path / "bad.jsonl")


def test_load_empty(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert load_detections(tmp_path / "e.jsonl") == {}


det_st = st.builds(
    lambda seq, x, y, w, h, label, o, c: Detection(seq, BBox(x, y, x + w, y + h), label, o, c),
    st.integers(0, 20), st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 40), st.floats(0.1, 40),
    st.sampled_from(["car", "bus", "tuk-tuk", "person"]), st.floats(0, 1), st.floats(0, 1))


@settings(max_examples=50, deadline=None)
@given(st.lists(det_st, max_size=12))
def test_save_load_identity(tmp_path_factory, dets):
    p = tmp_path_factory.mktemp("dets") / "d.jsonl"
    save_detections(p, dets)
    loaded = load_detections(p)
    flat = [d for seq in sorted(loaded) for d in loaded[seq]]
    expect = sorted(dets, key=lambda d: d.frame_seq)
    assert flat == expect


def brute_nms(dets, t):
    """Repeatedly take the best remaining box and drop what it suppresses."""
    remaining = list(dets)
    out = []
    while remaining:
        best = min(remaining, key=lambda d: (-d.objectness, d.bbox.as_tuple(), d.class_label,
                                             -d.class_confidence))
        out.append(best)
        remaining = [d for d in remaining if d is not best
                     and not (d.class_label == best.class_label and iou(d.bbox, best.bbox) > t)]
    return out


def _d(x, obj, label="car", w=10.0):
    return Detection(0, BBox(x, 0, x + w, 10), label, obj, 1.0)


def test_nms_examples():
    a, b = _d(0, 0.9), _d(0, 0.8)
    assert nms([b, a], 0.5) == [a]
    c = _d(50, 0.1)
    assert nms([c, a], 0.5) == [a, c]
    # same place, other class: both survive
    assert len(nms([a, _d(0, 0.5, "bus")], 0.5)) == 2


def test_nms_chain_matches_brute_force():
    # x offsets giving pairwise IOU 0.6 between neighbours: overlap 7.5 of 10 wide boxes
    chain = [_d(0, 0.9), _d(2.5, 0.8), _d(5.0, 0.7)]
    assert iou(chain[0].bbox, chain[1].bbox) == pytest.approx(0.6)
    for perm in itertools.permutations(chain):
        assert nms(list(perm), 0.5) == brute_nms(chain, 0.5) == [chain[0], chain[2]]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 3), st.sampled_from(["car", "bus"])),
                max_size=8), st.sampled_from([0.3, 0.5, 0.7]), st.randoms())
def test_nms_oracle_and_order_independence(spec, t, rnd):
    dets = [_d(float(x), o / 3, label) for x, o, label in spec]
    expect = brute_nms(dets, t)
    assert nms(dets, t) == expect
    shuffled = list(dets)
    rnd.shuffle(shuffled)
    assert nms(shuffled, t) == expect


def test_bg_identical_frames():
    m = BackgroundModel()
    img = np.full((20, 30), 90, np.uint8)
    masks = [bg_update(m, img) for _ in range(10)]
    assert all((mk == 0).all() for mk in masks)


def test_bg_rectangle_exact():
    rng = np.random.default_rng(0)
    bg = rng.integers(50, 150, (48, 64)).astype(np.uint8)
    m = BackgroundModel(k=4)
    for _ in range(5):
        bg_update(m, bg)
    frame = bg.astype(int)
    frame[10:20, 20:40] += 100
    mean, var = m.mean.copy(), m.var.copy()
    mask = bg_update(m, np.clip(frame, 0, 255).astype(np.uint8))
    expected = np.zeros((48, 64), bool)
    for y in range(48):
        for x in range(64):
            expected[y, x] = abs(frame[y, x] - mean[y, x]) > 4 * np.sqrt(var[y, x])
    assert np.array_equal(mask == 255, expected)
    ys, xs = np.nonzero(expected)
    assert (ys.min(), ys.max(), xs.min(), xs.max()) == (10, 19, 20, 39) and expected.sum() == 200


def test_bg_update_rule_and_dims():
    m = BackgroundModel(alpha=0.5, warmup_frames=0)
    bg_update(m, np.full((2, 2), 10, np.uint8))
    assert np.all(m.var == 1.0)
    mask = bg_update(m, np.array([[10, 11], [10, 200]], np.uint8))
    assert mask.tolist() == [[0, 0], [0, 255]]
    # background pixels updated after classification, foreground frozen
    assert m.mean[0, 1] == pytest.approx(10.5)
    assert m.var[0, 1] == pytest.approx(1.0)
    assert m.mean[1, 1] == 10
    with pytest.raises(ValueError):
        bg_update(m, np.zeros((3, 2), np.uint8))
    with pytest.raises(ValueError):
        BackgroundModel(alpha=1.0)


def test_bg_false_foreground_rate():
    rng = np.random.default_rng(42)
    m = BackgroundModel()
    for sigma in (5.0,):
        for _ in range(50):
            bg_update(m, np.clip(100 + rng.normal(0, sigma, (48, 64)), 0, 255).astype(np.uint8))
        rates = [np.mean(bg_update(m, np.clip(100 + rng.normal(0, sigma, (48, 64)), 0, 255)
                                   .astype(np.uint8)) > 0) for _ in range(50)]
        assert np.mean(rates) <= 0.01


def flood_components(mask):
    h, w = mask.shape
    seen = np.zeros_like(mask, bool)
    out = []
    for y in range(h):
        for x in range(w):
            if mask[y, x] and not seen[y, x]:
                q, pts = deque([(y, x)]), []
                seen[y, x] = True
                while q:
                    cy, cx = q.popleft()
                    pts.append((cy, cx))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = cy + dy, cx + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                q.append((ny, nx))
                ys, xs = zip(*pts)
                out.append((BBox(min(xs), min(ys), max(xs) + 1, max(ys) + 1), len(pts)))
    return out


def test_components_examples():
    m = np.zeros((20, 20), np.uint8)
    m[1:6, 1:6] = 255
    m[10:15, 10:15] = 255
    assert connected_components(m, 10) == [BBox(1, 1, 6, 6), BBox(10, 10, 15, 15)]
    m = np.zeros((5, 5), np.uint8)
    m[1:4, 1:4] = 1
    assert connected_components(m, 10) == []
    d = np.eye(4, dtype=np.uint8)
    assert connected_components(d, 1) == [BBox(0, 0, 4, 4)]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 0.6), st.integers(1, 6))
def test_components_match_flood_fill(seed, density, min_area):
    mask = np.random.default_rng(seed).random((12, 15)) < density
    expect = sorted((b for b, a in flood_components(mask) if a >= min_area),
                    key=lambda b: (b.y_min, b.x_min, b.y_max, b.x_max))
    assert connected_components(mask, min_area) == expect


def _moving_rect_scene(noise_sigma=0.0):
    actor = ActorSpec.from_segments("car", 20, 10, 5, (2, 15), [(55, 1, 0)], texture_seed=3)
    return generate(SceneSpec(96, 48, 60, background="texture", background_seed=1,
                              actors=(actor,), noise_sigma=noise_sigma, seed=2))


def test_blob_detect_tracks_moving_rectangle():
    scene = _moving_rect_scene()
    m = BackgroundModel(warmup_frames=3)
    frames = [to_gray(f) for f in scene.frames]
    assert blob_detect(m, frames[0], 50) == []
    for f in frames[1:]:
        dets = blob_detect(m, f, 50)
        if f.seq < 5:
            assert dets == []
            continue
        (t,) = scene.truths_at(f.seq)
        assert len(dets) == 1
        d = dets[0]
        assert d.class_label == "object" and d.class_confidence == 1.0
        assert d.frame_seq == f.seq
        assert iou(d.bbox, t.bbox) >= 0.9


def test_blob_detect_with_sensor_noise():
    # isolated noise pixels can touch the blob now and then, so judge the median
    scene = _moving_rect_scene(noise_sigma=1.0)
    m = BackgroundModel(warmup_frames=3)
    ious = []
    for f in map(to_gray, scene.frames):
        dets = blob_detect(m, f, 50)
        if f.seq >= 5:
            (t,) = scene.truths_at(f.seq)
            ious.append(max([iou(d.bbox, t.bbox) for d in dets] or [0.0]))
    assert np.median(ious) >= 0.9
    assert np.mean(np.array(ious) >= 0.9) >= 0.95


def test_blob_detect_static_scene():
    m = BackgroundModel()
    img = np.random.default_rng(0).integers(0, 255, (30, 40)).astype(np.uint8)
    assert [blob_detect(m, img) for _ in range(60)][1:] == [[]] * 59


def test_blob_objectness():
    m = BackgroundModel(warmup_frames=0)
    bg = np.full((40, 40), 50, np.uint8)
    blob_detect(m, bg, 10)
    img = bg.copy()
    img[5:10, 5:9] = 250
    (d,) = blob_detect(m, img, 10)
    assert d.objectness == pytest.approx(20 / 40)
