"""Core frame, box, detection and event types shared by every stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class PixelFormat(str, enum.Enum):
    GRAY8 = "GRAY8"
    RGB24 = "RGB24"
    YCBCR420 = "YCbCr420"


def buffer_size(fmt: PixelFormat, width: int, height: int) -> int:
    if fmt is PixelFormat.GRAY8:
        return width * height
    if fmt is PixelFormat.RGB24:
        return 3 * width * height
    cw, ch = (width + 1) // 2, (height + 1) // 2
    return width * height + 2 * cw * ch


def round_half_away(x):
    """Round half away from zero; works on scalars and arrays."""
    if isinstance(x, np.ndarray):
        return np.sign(x) * np.floor(np.abs(x) + 0.5)
    return math.copysign(math.floor(abs(x) + 0.5), x)


@dataclass(frozen=True, eq=False)
class Frame:
    """One decoded video frame. ``pixels`` is a flat, read-only uint8 buffer.

    Layouts: GRAY8 is row-major luma, RGB24 is row-major interleaved RGB,
    YCbCr420 is the Y plane followed by the Cb and Cr planes.
    """

    seq: int
    timestamp_ms: float
    width: int
    height: int
    pixels: np.ndarray
    format: PixelFormat

    def __post_init__(self):
        fmt = PixelFormat(self.format)
        object.__setattr__(self, "format", fmt)
        if self.seq < 0:
            raise ValueError(f"seq must be non-negative, got {self.seq}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid frame size {self.width}x{self.height}")
        if fmt is PixelFormat.YCBCR420 and (self.width % 2 or self.height % 2):
            raise ValueError("YCbCr420 frames need even width and height")
        buf = np.array(self.pixels, dtype=np.uint8, copy=True).reshape(-1)
        expected = buffer_size(fmt, self.width, self.height)
        if buf.size != expected:
            raise ValueError(
                f"{fmt.value} {self.width}x{self.height} needs {expected} bytes, got {buf.size}"
            )
        buf.flags.writeable = False
        object.__setattr__(self, "pixels", buf)

    @classmethod
    def from_gray(cls, img: np.ndarray, seq: int = 0, timestamp_ms: float = 0.0) -> "Frame":
        h, w = img.shape
        return cls(seq, timestamp_ms, w, h, img, PixelFormat.GRAY8)

    @classmethod
    def from_rgb(cls, img: np.ndarray, seq: int = 0, timestamp_ms: float = 0.0) -> "Frame":
        h, w, c = img.shape
        if c != 3:
            raise ValueError("RGB image must have 3 channels")
        return cls(seq, timestamp_ms, w, h, img, PixelFormat.RGB24)

    @classmethod
    def from_planes(cls, y: np.ndarray, cb: np.ndarray, cr: np.ndarray,
                    seq: int = 0, timestamp_ms: float = 0.0) -> "Frame":
        h, w = y.shape
        buf = np.concatenate([y.reshape(-1), cb.reshape(-1), cr.reshape(-1)])
        return cls(seq, timestamp_ms, w, h, buf, PixelFormat.YCBCR420)

    @property
    def gray(self) -> np.ndarray:
        if self.format is not PixelFormat.GRAY8:
            raise ValueError(f"frame is {self.format.value}, not GRAY8")
        return self.pixels.reshape(self.height, self.width)

    @property
    def rgb(self) -> np.ndarray:
        if self.format is not PixelFormat.RGB24:
            raise ValueError(f"frame is {self.format.value}, not RGB24")
        return self.pixels.reshape(self.height, self.width, 3)

    @property
    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.format is not PixelFormat.YCBCR420:
            raise ValueError(f"frame is {self.format.value}, not YCbCr420")
        w, h = self.width, self.height
        n = w * h
        c = (w // 2) * (h // 2)
        p = self.pixels
        return (p[:n].reshape(h, w),
                p[n:n + c].reshape(h // 2, w // 2),
                p[n + c:].reshape(h // 2, w // 2))

    def with_seq(self, seq: int, timestamp_ms: float | None = None) -> "Frame":
        ts = self.timestamp_ms if timestamp_ms is None else timestamp_ms
        return Frame(seq, ts, self.width, self.height, self.pixels, self.format)

    def same_pixels(self, other: "Frame") -> bool:
        return (self.format is other.format and self.width == other.width
                and self.height == other.height
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True, order=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def clip_to_frame(b: BBox, width: float, height: float) -> BBox | None:
    """Clamp a box to the frame; ``None`` when nothing of it remains."""
    if width <= 0 or height <= 0:
        raise ValueError("frame dimensions must be positive")
    x0 = min(max(b.x_min, 0.0), width)
    y0 = min(max(b.y_min, 0.0), height)
    x1 = min(max(b.x_max, 0.0), width)
    y1 = min(max(b.y_max, 0.0), height)
    if x1 <= x0 or y1 <= y0:
        return None
    return BBox(x0, y0, x1, y1)


def anchor_point(b: BBox) -> tuple[float, float]:
    """Bottom-centre of the box, the approximate ground contact point."""
    return ((b.x_min + b.x_max) / 2, b.y_max)


def center_point(b: BBox) -> tuple[float, float]:
    return ((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2)


def vector_angle_deg(dx: float, dy: float) -> float:
    """Direction of an image-space vector, y-up math convention, in [0, 360)."""
    a = math.degrees(math.atan2(-dy, dx)) % 360.0
    return 0.0 if a == 360.0 else a


def angle_between_deg(ux: float, uy: float, vx: float, vy: float) -> float:
    """Unsigned angle in [0, 180] between two vectors of the same convention."""
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    return math.degrees(math.atan2(abs(cross), dot))


@dataclass(frozen=True)
class Detection:
    frame_seq: int
    bbox: BBox
    class_label: str
    objectness: float
    class_confidence: float
    class_scores: Mapping[str, float] | None = None

    def __post_init__(self):
        for name in ("objectness", "class_confidence"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0,1], got {v}")
        if self.class_scores is not None:
            scores = dict(self.class_scores)
            for label, v in scores.items():
                if not (0.0 <= v <= 1.0):
                    raise ValueError(f"class score for {label!r} out of range: {v}")
            if self.class_label not in scores or scores[self.class_label] < max(scores.values()):
                raise ValueError("class_label must attain the maximum class score")
            object.__setattr__(self, "class_scores", scores)

    @property
    def confidence(self) -> float:
        return self.objectness * self.class_confidence


MOTION_EPSILON = 1e-6


@dataclass(frozen=True)
class MotionEstimate:
    """Per-detection displacement in pixels/frame (image axes, y down).

    ``angle_deg`` is ``None`` when the vector is too short to have a direction.
    """

    dx: float
    dy: float
    angle_deg: float | None
    magnitude: float
    support: int

    def __post_init__(self):
        if self.support < 0:
            raise ValueError("support must be >= 0")
        if abs(self.magnitude - math.hypot(self.dx, self.dy)) > 1e-9:
            raise ValueError("magnitude inconsistent with (dx, dy)")

    @classmethod
    def from_vector(cls, dx: float, dy: float, support: int = 0,
                    epsilon: float = MOTION_EPSILON) -> "MotionEstimate":
        dx, dy = float(dx), float(dy)
        mag = math.hypot(dx, dy)
        angle = vector_angle_deg(dx, dy) if mag >= epsilon else None
        return cls(dx, dy, angle, mag, int(support))


class EventKind(str, enum.Enum):
    WRONG_WAY = "WRONG_WAY"
    PROHIBITED_SURFACE = "PROHIBITED_SURFACE"
    ILLEGAL_STOP = "ILLEGAL_STOP"


@dataclass(frozen=True)
class BehaviorEvent:
    kind: EventKind
    first_seq: int
    last_seq: int
    bbox: BBox
    class_label: str
    zone_id: int
    evidence: Mapping[str, float] = field(default_factory=dict)
    tracklet_id: int = -1

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.first_seq > self.last_seq:
            raise ValueError("event first_seq must not exceed last_seq")


@dataclass(frozen=True)
class GroundTruthBox:
    frame_seq: int
    bbox: BBox
    class_label: str
    track_id: int
    true_motion: tuple[float, float] | None = None

    def __post_init__(self):
        if self.track_id < 0:
            raise ValueError("track_id must be >= 0")
