import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trafficpipe.geometry import (BBox, Detection, Frame, MotionEstimate, PixelFormat, anchor_point,
                                  angle_between_deg, buffer_size, clip_to_frame, iou, round_half_away,
                                  vector_angle_deg)

coord = st.floats(-200, 200, allow_nan=False)
extent = st.floats(0.5, 100, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(extent), draw(extent)
    return BBox(x, y, x + w, y + h)


def test_iou_examples():
    a = BBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BBox(20, 20, 30, 30)) == 0.0
    assert iou(a, BBox(5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-15)
    # touching edges have zero overlap, exactly
    assert iou(a, BBox(10, 0, 20, 10)) == 0.0


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes(), boxes(), st.floats(-50, 50), st.floats(-50, 50))
def test_iou_translation_invariant(a, b, tx, ty):
    assert iou(a.translated(tx, ty), b.translated(tx, ty)) == pytest.approx(iou(a, b), abs=1e-9)


@given(boxes())
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_clip_to_frame():
    assert clip_to_frame(BBox(-5, -5, 10, 10), 100, 100) == BBox(0, 0, 10, 10)
    assert clip_to_frame(BBox(5, 5, 8, 8), 100, 100) == BBox(5, 5, 8, 8)
    assert clip_to_frame(BBox(120, 120, 130, 130), 100, 100) is None
    with pytest.raises(ValueError):
        clip_to_frame(BBox(0, 0, 1, 1), 0, 10)


def test_anchor_point():
    assert anchor_point(BBox(0, 0, 10, 20)) == (5, 20)
    assert anchor_point(BBox(4, 4, 6, 6)) == (5, 6)
    assert anchor_point(BBox(0, 0, 1, 1)) == (0.5, 1)


def test_bbox_rejects_degenerate():
    for vals in [(0, 0, 0, 1), (0, 0, 1, 0), (2, 0, 1, 1), (0, 0, math.nan, 1), (0, 0, math.inf, 1)]:
        with pytest.raises(ValueError):
            BBox(*vals)


def test_buffer_sizes():
    assert buffer_size(PixelFormat.GRAY8, 7, 5) == 35
    assert buffer_size(PixelFormat.RGB24, 7, 5) == 105
    assert buffer_size(PixelFormat.YCBCR420, 64, 48) == 64 * 48 + 2 * 32 * 24
    # odd dims round the chroma planes up
    assert buffer_size(PixelFormat.YCBCR420, 5, 3) == 15 + 2 * 3 * 2


def test_frame_buffer_checks():
    Frame(0, 0.0, 4, 2, np.zeros(8, np.uint8), PixelFormat.GRAY8)
    with pytest.raises(ValueError):
        Frame(0, 0.0, 4, 2, np.zeros(9, np.uint8), PixelFormat.GRAY8)
    with pytest.raises(ValueError):
        Frame(0, 0.0, 0, 2, np.zeros(0, np.uint8), PixelFormat.GRAY8)
    with pytest.raises(ValueError):
        Frame(0, 0.0, 5, 4, np.zeros(buffer_size(PixelFormat.YCBCR420, 5, 4), np.uint8), "YCbCr420")
    with pytest.raises(ValueError):
        Frame(-1, 0.0, 4, 2, np.zeros(8, np.uint8), PixelFormat.GRAY8)


def test_frame_pixels_read_only_and_copied():
    src = np.arange(12, dtype=np.uint8).reshape(3, 4)
    f = Frame.from_gray(src)
    src[0, 0] = 99
    assert f.gray[0, 0] == 0
    with pytest.raises(ValueError):
        f.pixels[0] = 1


def test_frame_planes():
    y = np.full((4, 6), 1, np.uint8)
    cb = np.full((2, 3), 2, np.uint8)
    cr = np.full((2, 3), 3, np.uint8)
    f = Frame.from_planes(y, cb, cr)
    assert f.format is PixelFormat.YCBCR420
    py, pcb, pcr = f.planes
    assert (py == 1).all() and (pcb == 2).all() and (pcr == 3).all()


def test_round_half_away():
    assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, -1.5, 0.49)] == [1, 2, 3, -1, -2, 0]
    np.testing.assert_array_equal(round_half_away(np.array([0.5, -2.5, 1.2])), [1, -3, 1])


def test_angle_convention():
    assert vector_angle_deg(1, 0) == 0.0
    assert vector_angle_deg(0, -1) == pytest.approx(90.0)   # up-screen
    assert vector_angle_deg(-1, 0) == pytest.approx(180.0)
    assert vector_angle_deg(0, 1) == pytest.approx(270.0)
    assert angle_between_deg(1, 0, -1, 0) == pytest.approx(180.0)
    assert angle_between_deg(1, 0, 0, 1) == pytest.approx(90.0)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_motion_estimate_invariants(dx, dy):
    m = MotionEstimate.from_vector(dx, dy, support=3)
    assert abs(m.magnitude - math.hypot(dx, dy)) <= 1e-9
    assert (m.angle_deg is None) == (m.magnitude < 1e-6)
    if m.angle_deg is not None:
        assert 0.0 <= m.angle_deg < 360.0


def test_motion_estimate_rejects_bad_fields():
    with pytest.raises(ValueError):
        MotionEstimate(3, 4, 0.0, 4.0, 1)
    with pytest.raises(ValueError):
        MotionEstimate(3, 4, 0.0, 5.0, -1)


def test_detection_validation():
    b = BBox(0, 0, 1, 1)
    Detection(0, b, "car", 0.5, 1.0, {"car": 0.9, "bus": 0.1})
    with pytest.raises(ValueError):
        Detection(0, b, "car", 1.5, 1.0)
    with pytest.raises(ValueError):
        Detection(0, b, "car", 0.5, 1.0, {"car": 0.1, "bus": 0.9})
    assert Detection(0, b, "car", 0.5, 0.5).confidence == 0.25
