"""Detection ingestion from JSONL files and a background-subtraction blob detector."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .geometry import BBox, Detection, Frame, PixelFormat, iou

LOGGER = logging.getLogger(__name__)

RECORD_FIELDS = ("frame_seq", "class_label", "x_min", "y_min", "x_max", "y_max",
                 "objectness", "class_confidence")


class DetectionFileError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def detection_from_record(rec: dict) -> Detection:
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    seq = rec["frame_seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ValueError(f"frame_seq must be a non-negative integer, got {seq!r}")
    if not isinstance(rec["class_label"], str):
        raise ValueError("class_label must be a string")
    coords = []
    for k in ("x_min", "y_min", "x_max", "y_max", "objectness", "class_confidence"):
        v = rec[k]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"{k} must be a number, got {v!r}")
        coords.append(float(v))
    box = BBox(*coords[:4])
    return Detection(seq, box, rec["class_label"], coords[4], coords[5], rec.get("class_scores"))


def detection_to_record(det: Detection, **extra) -> dict:
    rec = {
        "frame_seq": det.frame_seq,
        "class_label": det.class_label,
        "x_min": det.bbox.x_min,
        "y_min": det.bbox.y_min,
        "x_max": det.bbox.x_max,
        "y_max": det.bbox.y_max,
        "objectness": det.objectness,
        "class_confidence": det.class_confidence,
    }
    if det.class_scores is not None:
        rec["class_scores"] = dict(sorted(det.class_scores.items()))
    rec.update(extra)
    return rec


def load_detections(path) -> dict[int, list[Detection]]:
    """Read one JSON detection record per line, grouped by frame, file order kept."""
    out: dict[int, list[Detection]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not a JSON object")
                det = detection_from_record(rec)
            except (ValueError, TypeError) as exc:
                raise DetectionFileError(path, line_no, str(exc)) from None
            out.setdefault(det.frame_seq, []).append(det)
    return out


def dumps_detection(det: Detection, **extra) -> str:
    return json.dumps(detection_to_record(det, **extra), separators=(", ", ": "))


def save_detections(path, dets: Iterable[Detection]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for det in dets:
            fh.write(dumps_detection(det) + "\n")


def _det_key(d: Detection):
    return (-d.objectness, d.bbox.as_tuple(), d.class_label, -d.class_confidence)


def nms(dets: Sequence[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy same-class suppression, highest objectness first."""
    kept: list[Detection] = []
    for d in sorted(dets, key=_det_key):
        if all(k.class_label != d.class_label or iou(k.bbox, d.bbox) <= iou_threshold for k in kept):
            kept.append(d)
    return kept


@dataclass
class BackgroundModel:
    """Per-pixel running Gaussian background.

    All pixels are updated during the first ``warmup_frames`` frames so the
    variance can settle; afterwards only pixels classified as background are
    updated, which keeps stationary objects from melting into the model.
    """

    alpha: float = 0.02
    k: float = 4.0
    var_floor: float = 1.0
    warmup_frames: int = 50
    mean: np.ndarray | None = field(default=None, repr=False)
    var: np.ndarray | None = field(default=None, repr=False)
    frames_seen: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.var_floor <= 0:
            raise ValueError("var_floor must be positive")

    @property
    def initialized(self) -> bool:
        return self.mean is not None


def _gray_array(frame) -> np.ndarray:
    if isinstance(frame, Frame):
        if frame.format is not PixelFormat.GRAY8:
            raise ValueError(f"expected GRAY8 frame, got {frame.format.value}")
        return frame.gray
    return np.asarray(frame)


def bg_update(model: BackgroundModel, gray) -> np.ndarray:
    """Classify then update; returns a 0/255 uint8 foreground mask."""
    img = _gray_array(gray).astype(np.float64)
    if model.mean is None:
        model.mean = img.copy()
        model.var = np.full(img.shape, model.var_floor)
        model.frames_seen = 1
        return np.zeros(img.shape, dtype=np.uint8)
    if img.shape != model.mean.shape:
        raise ValueError(f"frame shape {img.shape[::-1]} does not match model {model.mean.shape[::-1]}")
    diff = img - model.mean
    fg = np.abs(diff) > model.k * np.sqrt(model.var)
    model.frames_seen += 1
    upd = np.ones_like(fg) if model.frames_seen <= model.warmup_frames else ~fg
    a = model.alpha
    model.mean = np.where(upd, (1 - a) * model.mean + a * img, model.mean)
    new_var = np.maximum((1 - a) * model.var + a * diff * diff, model.var_floor)
    model.var = np.where(upd, new_var, model.var)
    return np.where(fg, 255, 0).astype(np.uint8)


_EIGHT = np.ones((3, 3), dtype=bool)


def connected_components(mask, min_area: int) -> list[BBox]:
    """8-connected foreground blobs with at least ``min_area`` pixels.

    Boxes use pixel-edge coordinates: a blob covering columns 3..7 spans x 3-8.
    Sorted by (y_min, x_min).
    """
    return [box for box, _ in component_areas(mask, min_area)]


def component_areas(mask, min_area: int) -> list[tuple[BBox, int]]:
    fg = np.asarray(mask) > 0
    labels, count = ndimage.label(fg, structure=_EIGHT)
    areas = np.bincount(labels.ravel())
    out = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[i] < min_area:
            continue
        ys, xs = sl
        out.append((BBox(float(xs.start), float(ys.start), float(xs.stop), float(ys.stop)), int(areas[i])))
    out.sort(key=lambda t: (t[0].y_min, t[0].x_min, t[0].y_max, t[0].x_max))
    return out


def blob_detect(model: BackgroundModel, gray, min_area: int = 50, seq: int | None = None,
                label: str = "object") -> list[Detection]:
    """Class-agnostic detections from the foreground blobs of one frame."""
    mask = bg_update(model, gray)
    if seq is None:
        seq = gray.seq if isinstance(gray, Frame) else 0
    return [
        Detection(seq, box, label, min(1.0, area / (4.0 * min_area)), 1.0)
        for box, area in component_areas(mask, min_area)
    ]
