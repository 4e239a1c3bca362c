"""BT.601 colour conversions between the three frame formats.

All outputs are clamped to [0, 255] and rounded half away from zero.
YCbCr conversions default to full-range (JFIF, what ``C420jpeg`` declares);
pass ``studio_swing=True`` for 16-235 luma / 16-240 chroma material.
"""

from __future__ import annotations

import numpy as np

from ..geometry import Frame, PixelFormat, round_half_away


def _to_u8(x: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    return _to_u8(0.299 * r + 0.587 * g + 0.114 * b)


def to_gray(frame: Frame) -> Frame:
    if frame.format is PixelFormat.GRAY8:
        return frame
    if frame.format is PixelFormat.RGB24:
        gray = rgb_to_luma(frame.rgb)
    else:
        # luma plane is already Y'
        gray = frame.planes[0]
    return Frame.from_gray(gray, frame.seq, frame.timestamp_ms)


def _upsample(plane: np.ndarray, h: int, w: int) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)[:h, :w]


def ycbcr_to_rgb(frame: Frame, studio_swing: bool = False) -> Frame:
    if frame.format is PixelFormat.RGB24:
        return frame
    if frame.format is PixelFormat.GRAY8:
        g = frame.gray
        return Frame.from_rgb(np.stack([g, g, g], axis=-1), frame.seq, frame.timestamp_ms)
    y, cb, cr = frame.planes
    h, w = y.shape
    yf = y.astype(np.float64)
    cbf = _upsample(cb, h, w).astype(np.float64) - 128.0
    crf = _upsample(cr, h, w).astype(np.float64) - 128.0
    if studio_swing:
        yf = (yf - 16.0) * (255.0 / 219.0)
        cbf = cbf * (255.0 / 224.0)
        crf = crf * (255.0 / 224.0)
    r = yf + 1.402 * crf
    g = yf - 0.344136 * cbf - 0.714136 * crf
    b = yf + 1.772 * cbf
    rgb = np.stack([_to_u8(r), _to_u8(g), _to_u8(b)], axis=-1)
    return Frame.from_rgb(rgb, frame.seq, frame.timestamp_ms)


def _subsample(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def rgb_to_ycbcr(frame: Frame, studio_swing: bool = False) -> Frame:
    """Convert to YCbCr 4:2:0; chroma is the mean of each 2x2 block."""
    if frame.format is PixelFormat.YCBCR420:
        return frame
    if frame.format is PixelFormat.GRAY8:
        return gray_to_ycbcr(frame)
    rgb = frame.rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b
    if studio_swing:
        y = 16.0 + y * (219.0 / 255.0)
        cb = cb * (224.0 / 255.0)
        cr = cr * (224.0 / 255.0)
    return Frame.from_planes(_to_u8(y), _to_u8(_subsample(cb) + 128.0),
                             _to_u8(_subsample(cr) + 128.0), frame.seq, frame.timestamp_ms)


def gray_to_ycbcr(frame: Frame) -> Frame:
    g = frame.gray
    h, w = g.shape
    neutral = np.full((h // 2, w // 2), 128, dtype=np.uint8)
    return Frame.from_planes(g, neutral, neutral, frame.seq, frame.timestamp_ms)
