import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trafficpipe.geometry import BBox, Detection
from trafficpipe.videoio.pnm import pgm_write
from trafficpipe.zones import (Surface, ZoneError, ZoneMap, ZoneMeta, load_zone_map, paint_rect,
                               save_zone_map, zone_at, zone_of_box, zone_of_detection)


def _map():
    r = np.zeros((20, 30), np.uint8)
    paint_rect(r, 1, 0, 0, 30, 10)
    paint_rect(r, 2, 0, 10, 30, 20)
    r[3, 11] = 5
    zones = {1: ZoneMeta(1, Surface.ROAD, (1.0, 0.0)), 2: ZoneMeta(2, Surface.SIDEWALK, None, False, {"motorcycle"}),
             5: ZoneMeta(5, Surface.OTHER)}
    return ZoneMap(r, zones)


def test_zone_at():
    z = _map()
    assert zone_at(z, 5, 15) == 2
    assert zone_at(z, -5, 10) == 0
    assert zone_at(z, 10.6, 3.2) == z.raster[3, 11] == 5
    assert zone_at(z, 10.5, 2.5) == 5
    assert zone_at(z, 29.4, 19.4) == 2 and zone_at(z, 29.5, 5) == 0


@given(st.floats(allow_nan=True, allow_infinity=True), st.floats(allow_nan=True, allow_infinity=True))
def test_zone_at_total(x, y):
    assert zone_at(_MAP, x, y) in (0, 1, 2, 5)


_MAP = _map()


def test_zone_of_detection_anchor():
    z = _map()
    on_walk = Detection(0, BBox(2, 12, 8, 16), "motorcycle", 1, 1)
    assert zone_of_detection(z, on_walk) == 2
    straddle = Detection(0, BBox(2, 4, 8, 9.2), "car", 1, 1)
    assert zone_of_detection(z, straddle) == 1
    assert zone_of_box(z, BBox(2, 4, 8, 14), "center") == 1
    assert zone_of_box(z, BBox(2, 4, 8, 14)) == 2
    assert zone_of_detection(ZoneMap.empty(30, 20), on_walk) == 0
    with pytest.raises(ZoneError):
        zone_of_box(z, straddle.bbox, "top")


def test_meta_validation():
    ZoneMeta(1, allowed_direction=(3 / 5, 4 / 5))
    with pytest.raises(ZoneError):
        ZoneMeta(1, allowed_direction=(3, 4))
    with pytest.raises(ZoneError):
        ZoneMeta(0)
    with pytest.raises(ValueError):
        ZoneMeta(1, surface="LAKE")


def _write(tmp, raster, zones):
    pgm_write(raster, tmp / "z.pgm")
    (tmp / "z.json").write_text(json.dumps({"zones": zones}))
    return tmp / "z.pgm", tmp / "z.json"


def test_load_all_unlabeled(tmp_path):
    r, m = _write(tmp_path, np.zeros((4, 6), np.uint8), [])
    z = load_zone_map(r, m, 6, 4)
    assert z.zones == {} and (z.raster == 0).all()


def test_load_orphan_names_ids(tmp_path):
    raster = np.zeros((4, 6), np.uint8)
    raster[0, 0], raster[1, 1] = 3, 7
    r, m = _write(tmp_path, raster, [{"zone_id": 7}])
    with pytest.raises(ZoneError, match=r"\b3\b"):
        load_zone_map(r, m, 6, 4)


def test_load_errors(tmp_path):
    r, m = _write(tmp_path, np.zeros((4, 6), np.uint8), [{"zone_id": 1, "allowed_direction": [3, 4]}])
    with pytest.raises(ZoneError):
        load_zone_map(r, m, 6, 4)
    r, m = _write(tmp_path, np.zeros((4, 6), np.uint8), [])
    with pytest.raises(ZoneError):
        load_zone_map(r, m, 8, 4)
    r, m = _write(tmp_path, np.zeros((4, 6), np.uint8), [{"zone_id": 1}, {"zone_id": 1}])
    with pytest.raises(ZoneError, match="duplicate"):
        load_zone_map(r, m, 6, 4)
    (tmp_path / "z.json").write_text("{nope")
    with pytest.raises(ZoneError):
        load_zone_map(r, m, 6, 4)


def test_save_load_roundtrip(tmp_path):
    z = _map()
    save_zone_map(z, tmp_path / "a.pgm", tmp_path / "a.json")
    back = load_zone_map(tmp_path / "a.pgm", tmp_path / "a.json", 30, 20)
    assert np.array_equal(back.raster, z.raster) and back.zones == z.zones
    save_zone_map(back, tmp_path / "b.pgm", tmp_path / "b.json")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def test_zone_map_immutable():
    z = _map()
    with pytest.raises(ValueError):
        z.raster[0, 0] = 9
