"""Deterministic integer rasterisation of annotation overlays."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from ..geometry import BBox, Frame, PixelFormat, round_half_away
from .font import GLYPH_H, text_mask

Color = tuple[int, int, int]

BOX_THICKNESS = 2
ARROW_HEAD_PX = 6
ARROW_HEAD_DEG = 30.0


def _check_color(c: Color) -> Color:
    if len(c) != 3 or not all(isinstance(v, (int, np.integer)) and 0 <= v <= 255 for v in c):
        raise ValueError(f"colour must be an 8-bit RGB triple, got {c!r}")
    return tuple(int(v) for v in c)


@dataclass(frozen=True)
class BoxCmd:
    bbox: BBox
    color: Color
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "color", _check_color(self.color))


@dataclass(frozen=True)
class ArrowCmd:
    origin: tuple[float, float]
    dx: float
    dy: float
    color: Color

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (*self.origin, self.dx, self.dy)):
            raise ValueError("arrow coordinates must be finite")
        object.__setattr__(self, "color", _check_color(self.color))


@dataclass(frozen=True)
class MaskTintCmd:
    raster: np.ndarray
    palette: Mapping[int, Color]
    alpha: float = 0.35

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        object.__setattr__(self, "palette", {int(k): _check_color(v) for k, v in self.palette.items()})


DrawCmd = Union[BoxCmd, ArrowCmd, MaskTintCmd]


@dataclass(frozen=True)
class OverlayLayer:
    commands: Sequence[DrawCmd] = field(default_factory=tuple)


def _r(v: float) -> int:
    return int(round_half_away(v))


def _fill(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color: Color) -> None:
    """Fill the half-open pixel rectangle [x0,x1) x [y0,y1), clipped."""
    h, w = img.shape[:2]
    x0, x1 = max(x0, 0), min(x1, w)
    y0, y1 = max(y0, 0), min(y1, h)
    if x0 < x1 and y0 < y1:
        img[y0:y1, x0:x1] = color


def draw_box(img: np.ndarray, cmd: BoxCmd) -> None:
    x0, y0 = _r(cmd.bbox.x_min), _r(cmd.bbox.y_min)
    x1, y1 = _r(cmd.bbox.x_max), _r(cmd.bbox.y_max)
    t = BOX_THICKNESS
    _fill(img, x0, y0, x1, min(y0 + t, y1), cmd.color)
    _fill(img, x0, max(y1 - t, y0), x1, y1, cmd.color)
    _fill(img, x0, y0, min(x0 + t, x1), y1, cmd.color)
    _fill(img, max(x1 - t, x0), y0, x1, y1, cmd.color)
    if cmd.label:
        ty = y0 - GLYPH_H - 1 if y0 - GLYPH_H - 1 >= 0 else y0 + t + 1
        draw_text(img, x0, ty, cmd.label, cmd.color)


def draw_text(img: np.ndarray, x: int, y: int, text: str, color: Color) -> None:
    mask = text_mask(text)
    h, w = img.shape[:2]
    mh, mw = mask.shape
    sx0, sy0 = max(0, -x), max(0, -y)
    sx1, sy1 = min(mw, w - x), min(mh, h - y)
    if sx0 >= sx1 or sy0 >= sy1:
        return
    region = img[y + sy0:y + sy1, x + sx0:x + sx1]
    region[mask[sy0:sy1, sx0:sx1]] = color


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _plot(img: np.ndarray, pts, color: Color) -> None:
    h, w = img.shape[:2]
    for x, y in pts:
        if 0 <= x < w and 0 <= y < h:
            img[y, x] = color


def draw_arrow(img: np.ndarray, cmd: ArrowCmd) -> None:
    ox, oy = cmd.origin
    x0, y0 = _r(ox), _r(oy)
    x1, y1 = _r(ox + cmd.dx), _r(oy + cmd.dy)
    _plot(img, bresenham(x0, y0, x1, y1), cmd.color)
    length = math.hypot(cmd.dx, cmd.dy)
    if length == 0:
        return
    back = math.atan2(-cmd.dy, -cmd.dx)
    for sign in (-1.0, 1.0):
        a = back + sign * math.radians(ARROW_HEAD_DEG)
        hx = _r(ox + cmd.dx + ARROW_HEAD_PX * math.cos(a))
        hy = _r(oy + cmd.dy + ARROW_HEAD_PX * math.sin(a))
        _plot(img, bresenham(x1, y1, hx, hy), cmd.color)


def draw_tint(img: np.ndarray, cmd: MaskTintCmd) -> None:
    h, w = img.shape[:2]
    raster = np.asarray(cmd.raster)[:h, :w]
    rh, rw = raster.shape
    view = img[:rh, :rw]
    for zone_id, color in sorted(cmd.palette.items()):
        sel = raster == zone_id
        if not sel.any():
            continue
        blended = (1.0 - cmd.alpha) * view[sel].astype(np.float64) + cmd.alpha * np.array(color, dtype=np.float64)
        view[sel] = np.clip(round_half_away(blended), 0, 255).astype(np.uint8)


def render_overlay(frame: Frame, layer: OverlayLayer) -> Frame:
    """Draw ``layer`` on a copy of an RGB24 frame."""
    if frame.format is not PixelFormat.RGB24:
        raise ValueError("render_overlay needs an RGB24 frame")
    img = frame.rgb.copy()
    for cmd in layer.commands:
        if isinstance(cmd, BoxCmd):
            draw_box(img, cmd)
        elif isinstance(cmd, ArrowCmd):
            draw_arrow(img, cmd)
        elif isinstance(cmd, MaskTintCmd):
            draw_tint(img, cmd)
        else:
            raise TypeError(f"unknown draw command {type(cmd).__name__}")
    return Frame.from_rgb(img, frame.seq, frame.timestamp_ms)
