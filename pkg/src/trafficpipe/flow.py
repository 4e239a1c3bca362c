"""Shi-Tomasi corners and pyramidal Lucas-Kanade tracking.

Images are handled as float64 arrays indexed ``[y, x]``; point coordinates
are ``(x, y)`` with pixel centres on integers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BBox, Frame, MotionEstimate, PixelFormat


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    max_corners: int = 400
    quality_level: float = 0.01
    min_distance: float = 7.0
    window: int = 15
    pyramid_levels: int = 3
    max_iterations: int = 30
    epsilon: float = 0.01

    def __post_init__(self):
        if self.max_corners < 1:
            raise FlowError("max_corners must be >= 1")
        if not 0.0 < self.quality_level <= 1.0:
            raise FlowError("quality_level must lie in (0, 1]")
        if self.min_distance < 0:
            raise FlowError("min_distance must be >= 0")
        if self.window < 3 or self.window % 2 == 0:
            raise FlowError("window must be an odd integer >= 3")
        if self.pyramid_levels < 1:
            raise FlowError("pyramid_levels must be >= 1")
        if self.max_iterations < 1:
            raise FlowError("max_iterations must be >= 1")
        if self.epsilon <= 0:
            raise FlowError("epsilon must be positive")


@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    response: float


class TrackStatus(str, enum.Enum):
    OK = "OK"
    LOST = "LOST"


@dataclass(frozen=True)
class TrackedPoint:
    prev: tuple[float, float]
    next: tuple[float, float] | None
    status: TrackStatus
    residual: float

    @property
    def displacement(self) -> tuple[float, float]:
        if self.next is None:
            raise FlowError("lost point has no displacement")
        return (self.next[0] - self.prev[0], self.next[1] - self.prev[1])


def _as_image(img) -> np.ndarray:
    if isinstance(img, Frame):
        if img.format is not PixelFormat.GRAY8:
            raise FlowError(f"expected a GRAY8 frame, got {img.format.value}")
        img = img.gray
    return np.asarray(img, dtype=np.float64)


def sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (scaled by 1/8) with replicated borders."""
    p = np.pad(img, 1, mode="edge")
    # vertical smoothing then horizontal difference, and vice versa
    sm_v = p[:-2, :] + 2.0 * p[1:-1, :] + p[2:, :]
    gx = (sm_v[:, 2:] - sm_v[:, :-2]) / 8.0
    sm_h = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    gy = (sm_h[2:, :] - sm_h[:-2, :]) / 8.0
    return gx, gy


def _box3(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, 1, mode="edge")
    h, w = a.shape
    out = np.zeros_like(a)
    for dy in range(3):
        for dx in range(3):
            out += p[dy:dy + h, dx:dx + w]
    return out


def min_eigen_map(gray) -> np.ndarray:
    """Smallest eigenvalue of the 3x3-summed structure tensor at every pixel."""
    img = _as_image(gray)
    gx, gy = sobel(img)
    a = _box3(gx * gx)
    b = _box3(gx * gy)
    c = _box3(gy * gy)
    half_tr = (a + c) / 2.0
    disc = np.sqrt(((a - c) / 2.0) ** 2 + b * b)
    return np.maximum(half_tr - disc, 0.0)


def _local_max(scores: np.ndarray) -> np.ndarray:
    p = np.pad(scores, 1, mode="edge")
    h, w = scores.shape
    keep = np.ones_like(scores, dtype=bool)
    for dy in range(3):
        for dx in range(3):
            if dy == 1 and dx == 1:
                continue
            keep &= scores >= p[dy:dy + h, dx:dx + w]
    return keep


def select_corners(scores: np.ndarray, p: FlowParams, roi: BBox | None = None) -> list[FeaturePoint]:
    h, w = scores.shape
    margin = p.window // 2
    valid = np.zeros((h, w), dtype=bool)
    valid[margin:h - margin, margin:w - margin] = True
    if roi is not None:
        ys, xs = np.mgrid[0:h, 0:w]
        valid &= (xs >= roi.x_min) & (xs < roi.x_max) & (ys >= roi.y_min) & (ys < roi.y_max)
    if not valid.any():
        return []
    peak = scores[valid].max()
    if peak <= 0:
        return []
    cand = valid & _local_max(scores) & (scores >= p.quality_level * peak) & (scores > 0)
    ys, xs = np.nonzero(cand)
    vals = scores[ys, xs]
    # descending score, ties by (y, x)
    order = np.lexsort((xs, ys, -vals))
    kept_x: list[int] = []
    kept_y: list[int] = []
    out: list[FeaturePoint] = []
    d2 = p.min_distance * p.min_distance
    for i in order:
        x, y = int(xs[i]), int(ys[i])
        if kept_x and d2 > 0:
            kx = np.asarray(kept_x)
            ky = np.asarray(kept_y)
            if np.any((kx - x) ** 2 + (ky - y) ** 2 < d2):
                continue
        kept_x.append(x)
        kept_y.append(y)
        out.append(FeaturePoint(float(x), float(y), float(vals[i])))
        if len(out) >= p.max_corners:
            break
    return out


def shi_tomasi(gray, p: FlowParams = FlowParams(), roi: BBox | None = None) -> list[FeaturePoint]:
    img = _as_image(gray)
    h, w = img.shape
    if h < p.window or w < p.window:
        raise FlowError(f"frame {w}x{h} smaller than window {p.window}")
    return select_corners(min_eigen_map(img), p, roi)


_GAUSS5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur5(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    p = np.pad(img, 2, mode="edge")
    tmp = sum(_GAUSS5[k] * p[:, k:k + w] for k in range(5))
    return sum(_GAUSS5[k] * tmp[k:k + h, :] for k in range(5))


def max_levels(width: int, height: int, min_size: int) -> int:
    """Largest level count whose coarsest image is at least ``min_size``."""
    levels = 1
    w, h = width, height
    while w >= 2 and h >= 2 and (w + 1) // 2 >= min_size and (h + 1) // 2 >= min_size:
        w, h = (w + 1) // 2, (h + 1) // 2
        levels += 1
    return levels


def usable_levels(width: int, height: int, p: FlowParams) -> int:
    """``p.pyramid_levels`` reduced until the coarsest level still holds half a window."""
    return max(1, min(p.pyramid_levels, max_levels(width, height, p.window // 2 + 1)))


def build_pyramid(gray, levels: int, min_size: int = 1) -> list[np.ndarray]:
    """Gaussian pyramid, level 0 first; each level is blurred then decimated 2x."""
    if levels < 1:
        raise FlowError("levels must be >= 1")
    base = _as_image(gray)
    pyr = [base]
    for _ in range(levels - 1):
        cur = pyr[-1]
        if min(cur.shape) < 2:
            raise FlowError(f"too many pyramid levels ({levels}) for image {base.shape[1]}x{base.shape[0]}")
        pyr.append(_blur5(cur)[::2, ::2])
    h, w = pyr[-1].shape
    if h < min_size or w < min_size:
        raise FlowError(
            f"too many pyramid levels ({levels}) for image {base.shape[1]}x{base.shape[0]}: "
            f"coarsest level {w}x{h} is below {min_size}"
        )
    return pyr


def bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def lk_track(prev_pyr: Sequence[np.ndarray], next_pyr: Sequence[np.ndarray],
             points, p: FlowParams = FlowParams()) -> list[TrackedPoint]:
    """Track ``points`` (FeaturePoints or (x, y) pairs) from prev to next."""
    if len(prev_pyr) != len(next_pyr):
        raise FlowError("pyramids have different level counts")
    for a, b in zip(prev_pyr, next_pyr):
        if a.shape != b.shape:
            raise FlowError("pyramid level shapes differ")
    pts = np.array([(q.x, q.y) if isinstance(q, FeaturePoint) else tuple(q) for q in points],
                   dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    h0, w0 = prev_pyr[0].shape
    if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > w0 - 1) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > h0 - 1):
        raise FlowError("points must lie inside the level-0 image")

    r = p.window // 2
    off = np.arange(-r, r + 1, dtype=np.float64)
    oy, ox = np.meshgrid(off, off, indexing="ij")
    ox = ox.reshape(1, -1)
    oy = oy.reshape(1, -1)
    min_eig_floor = 1e-4 * p.window * p.window

    guess = np.zeros((n, 2))
    lost = np.zeros(n, dtype=bool)
    residual = np.zeros(n)
    top = len(prev_pyr) - 1
    for level in range(top, -1, -1):
        prev_img, next_img = prev_pyr[level], next_pyr[level]
        lh, lw = prev_img.shape
        gx_img, gy_img = sobel(prev_img)
        base = pts / (2 ** level)
        wx = base[:, :1] + ox
        wy = base[:, 1:] + oy
        # window samples off the image carry no information; drop them from the sums
        inside = (wx >= 0) & (wx <= lw - 1) & (wy >= 0) & (wy <= lh - 1)
        tmpl = bilinear(prev_img, wx, wy)
        gx = bilinear(gx_img, wx, wy) * inside
        gy = bilinear(gy_img, wx, wy) * inside
        gxx = (gx * gx).sum(1)
        gxy = (gx * gy).sum(1)
        gyy = (gy * gy).sum(1)
        det = gxx * gyy - gxy * gxy
        min_eig = (gxx + gyy) / 2.0 - np.sqrt(((gxx - gyy) / 2.0) ** 2 + gxy * gxy)
        # a weak window only disqualifies a point at full resolution; coarser
        # levels lose fine texture, so there the guess is passed down unchanged
        weak = min_eig < min_eig_floor
        if level == 0:
            lost |= weak
        safe_det = np.where(weak | lost, 1.0, det)

        v = np.zeros((n, 2))
        active = ~(lost | weak)
        for _ in range(p.max_iterations):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            cx = base[idx, 0] + guess[idx, 0] + v[idx, 0]
            cy = base[idx, 1] + guess[idx, 1] + v[idx, 1]
            qx, qy = cx[:, None] + ox, cy[:, None] + oy
            seen = (qx >= 0) & (qx <= lw - 1) & (qy >= 0) & (qy <= lh - 1)
            diff = (tmpl[idx] - bilinear(next_img, qx, qy)) * seen
            bx = (diff * gx[idx]).sum(1)
            by = (diff * gy[idx]).sum(1)
            d = safe_det[idx]
            ex = (gyy[idx] * bx - gxy[idx] * by) / d
            ey = (gxx[idx] * by - gxy[idx] * bx) / d
            v[idx, 0] += ex
            v[idx, 1] += ey
            done = ex * ex + ey * ey < p.epsilon * p.epsilon
            active[idx[done]] = False

        pos = base + guess + v
        if level == 0:
            lost |= (pos[:, 0] < 0) | (pos[:, 0] > lw - 1) | (pos[:, 1] < 0) | (pos[:, 1] > lh - 1)
        if level > 0:
            guess = 2.0 * (guess + v)
        else:
            guess = guess + v
            final = bilinear(next_img, pos[:, :1] + ox, pos[:, 1:] + oy)
            residual = np.abs(tmpl - final).mean(1)

    result = []
    for i in range(n):
        prev_pt = (float(pts[i, 0]), float(pts[i, 1]))
        if lost[i]:
            result.append(TrackedPoint(prev_pt, None, TrackStatus.LOST, float("inf")))
        else:
            nxt = (prev_pt[0] + float(guess[i, 0]), prev_pt[1] + float(guess[i, 1]))
            result.append(TrackedPoint(prev_pt, nxt, TrackStatus.OK, float(residual[i])))
    return result


def box_motion(tracked: Sequence[TrackedPoint], box: BBox, min_support: int = 1) -> MotionEstimate | None:
    """Median displacement of OK points starting inside ``box``."""
    disp = [t.displacement for t in tracked
            if t.status is TrackStatus.OK and box.contains(*t.prev)]
    if len(disp) < max(min_support, 1):
        return None
    arr = np.asarray(disp)
    return MotionEstimate.from_vector(float(np.median(arr[:, 0])), float(np.median(arr[:, 1])), len(disp))


def estimate_box_motions(prev_pyr: Sequence[np.ndarray], cur_pyr: Sequence[np.ndarray],
                         boxes: Sequence[BBox], p: FlowParams = FlowParams(),
                         min_support: int = 3, scores: np.ndarray | None = None) -> list[MotionEstimate | None]:
    """Motion from the previous frame to the current one for each current box.

    Corners are picked inside each box on the current frame and tracked back
    to the previous frame, so the points sit on the object as it is boxed
    now; the resulting displacement is negated.
    """
    if scores is None:
        scores = min_eigen_map(cur_pyr[0])
    out: list[MotionEstimate | None] = []
    for box in boxes:
        feats = select_corners(scores, p, roi=box)
        tracked = lk_track(cur_pyr, prev_pyr, feats, p)
        m = box_motion(tracked, box, min_support)
        out.append(None if m is None else MotionEstimate.from_vector(-m.dx, -m.dy, m.support))
    return out
