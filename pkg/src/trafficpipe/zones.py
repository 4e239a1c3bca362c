"""Hand-authored zone maps: a PGM raster of zone ids plus per-zone rule metadata."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import BBox, Detection, anchor_point, center_point, round_half_away
from .videoio.pnm import pgm_read, pgm_write

UNLABELED = 0


class ZoneError(ValueError):
    pass


class Surface(str, enum.Enum):
    ROAD = "ROAD"
    SIDEWALK = "SIDEWALK"
    CROSSWALK = "CROSSWALK"
    OTHER = "OTHER"


@dataclass(frozen=True)
class ZoneMeta:
    zone_id: int
    surface: Surface = Surface.ROAD
    allowed_direction: tuple[float, float] | None = None
    no_stopping: bool = False
    prohibited_classes: frozenset[str] = frozenset()

    def __post_init__(self):
        if not 1 <= self.zone_id <= 255:
            raise ZoneError(f"zone_id must be in 1..255, got {self.zone_id}")
        object.__setattr__(self, "surface", Surface(self.surface))
        object.__setattr__(self, "prohibited_classes", frozenset(self.prohibited_classes))
        if self.allowed_direction is not None:
            dx, dy = (float(v) for v in self.allowed_direction)
            norm = math.hypot(dx, dy)
            if abs(norm - 1.0) > 1e-6:
                raise ZoneError(
                    f"zone {self.zone_id}: allowed_direction ({dx}, {dy}) has norm {norm:.6g}, must be a unit vector"
                )
            object.__setattr__(self, "allowed_direction", (dx, dy))

    def to_json(self) -> dict:
        return {
            "zone_id": self.zone_id,
            "surface": self.surface.value,
            "allowed_direction": list(self.allowed_direction) if self.allowed_direction else None,
            "no_stopping": self.no_stopping,
            "prohibited_classes": sorted(self.prohibited_classes),
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "ZoneMeta":
        try:
            direction = d.get("allowed_direction")
            return cls(
                zone_id=int(d["zone_id"]),
                surface=Surface(d.get("surface", "ROAD")),
                allowed_direction=tuple(direction) if direction is not None else None,
                no_stopping=bool(d.get("no_stopping", False)),
                prohibited_classes=frozenset(d.get("prohibited_classes", ())),
            )
        except KeyError as exc:
            raise ZoneError(f"zone entry missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ZoneError):
                raise
            raise ZoneError(f"invalid zone entry {dict(d)!r}: {exc}") from None


@dataclass(frozen=True, eq=False)
class ZoneMap:
    raster: np.ndarray
    zones: Mapping[int, ZoneMeta] = field(default_factory=dict)

    def __post_init__(self):
        r = np.array(self.raster, dtype=np.uint8, copy=True)
        if r.ndim != 2:
            raise ZoneError("zone raster must be 2-D")
        r.flags.writeable = False
        object.__setattr__(self, "raster", r)
        zones = dict(self.zones)
        for zid, meta in zones.items():
            if zid != meta.zone_id:
                raise ZoneError(f"zone key {zid} does not match meta id {meta.zone_id}")
        orphans = sorted(int(v) for v in np.unique(r) if v != UNLABELED and int(v) not in zones)
        if orphans:
            raise ZoneError(f"raster zone ids without metadata: {', '.join(map(str, orphans))}")
        object.__setattr__(self, "zones", zones)

    @property
    def width(self) -> int:
        return self.raster.shape[1]

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @classmethod
    def empty(cls, width: int, height: int) -> "ZoneMap":
        return cls(np.zeros((height, width), dtype=np.uint8), {})

    def meta(self, zone_id: int) -> ZoneMeta | None:
        return self.zones.get(zone_id)


def zone_at(zmap: ZoneMap, x: float, y: float) -> int:
    if not (math.isfinite(x) and math.isfinite(y)):
        return UNLABELED
    xi, yi = int(round_half_away(x)), int(round_half_away(y))
    if 0 <= xi < zmap.width and 0 <= yi < zmap.height:
        return int(zmap.raster[yi, xi])
    return UNLABELED


ANCHORS = {"bottom_center": anchor_point, "center": center_point}


def zone_of_box(zmap: ZoneMap, box: BBox, anchor: str = "bottom_center") -> int:
    try:
        fn = ANCHORS[anchor]
    except KeyError:
        raise ZoneError(f"unknown anchor {anchor!r}, expected one of {sorted(ANCHORS)}") from None
    return zone_at(zmap, *fn(box))


def zone_of_detection(zmap: ZoneMap, det: Detection, anchor: str = "bottom_center") -> int:
    return zone_of_box(zmap, det.bbox, anchor)


def meta_document(zmap: ZoneMap) -> dict:
    return {"zones": [zmap.zones[k].to_json() for k in sorted(zmap.zones)]}


def load_zone_map(raster_path, meta_path, width: int, height: int) -> ZoneMap:
    raster = pgm_read(raster_path)
    if raster.shape != (height, width):
        raise ZoneError(
            f"{raster_path}: raster is {raster.shape[1]}x{raster.shape[0]}, stream is {width}x{height}"
        )
    with open(meta_path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ZoneError(f"{meta_path}: invalid JSON: {exc}") from None
    entries = doc.get("zones", []) if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise ZoneError(f"{meta_path}: expected an object with a 'zones' list")
    zones: dict[int, ZoneMeta] = {}
    for entry in entries:
        meta = ZoneMeta.from_json(entry)
        if meta.zone_id in zones:
            raise ZoneError(f"{meta_path}: duplicate zone_id {meta.zone_id}")
        zones[meta.zone_id] = meta
    return ZoneMap(raster, zones)


def save_zone_map(zmap: ZoneMap, raster_path, meta_path) -> None:
    pgm_write(zmap.raster, raster_path)
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta_document(zmap), fh, indent=2)
        fh.write("\n")


def paint_rect(raster: np.ndarray, zone_id: int, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Fill the half-open rectangle [x0,x1) x [y0,y1) with ``zone_id`` in place."""
    raster[max(y0, 0):y1, max(x0, 0):x1] = zone_id
    return raster
