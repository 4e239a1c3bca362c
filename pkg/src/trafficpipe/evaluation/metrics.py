"""Precision/recall curves, confusion-matrix grids and motion angle error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..geometry import Detection, GroundTruthBox, MotionEstimate, angle_between_deg
from .matching import match_frame

NOT_DETECTED = "not detected"

FrameData = Mapping[int, tuple[Sequence[Detection], Sequence[GroundTruthBox]]]


def _grid(values, name: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in values)
    if not vals:
        raise ValueError(f"{name} must not be empty")
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise ValueError(f"{name} values must lie in [0, 1]")
    if list(vals) != sorted(vals):
        raise ValueError(f"{name} must be sorted ascending")
    return vals


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.25
    objectness_grid: tuple[float, ...] = (0.1, 0.4, 0.7)
    label_grid: tuple[float, ...] = (0.1, 0.4, 0.7)
    confidence_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    class_mapping: Mapping[str, str] = field(default_factory=dict)
    class_aware: bool = False
    min_speed_px: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        object.__setattr__(self, "objectness_grid", _grid(self.objectness_grid, "objectness_grid"))
        object.__setattr__(self, "label_grid", _grid(self.label_grid, "label_grid"))
        object.__setattr__(self, "confidence_grid", _grid(self.confidence_grid, "confidence_grid"))
        object.__setattr__(self, "class_mapping", dict(self.class_mapping))

    def true_label(self, t: GroundTruthBox) -> str:
        return self.class_mapping.get(t.class_label, t.class_label)


def group_frames(dets: Mapping[int, Sequence[Detection]], truths: Sequence[GroundTruthBox]) -> dict:
    by_seq: dict[int, list[GroundTruthBox]] = {}
    for t in truths:
        by_seq.setdefault(t.frame_seq, []).append(t)
    seqs = sorted(set(dets) | set(by_seq))
    return {s: (list(dets.get(s, ())), by_seq.get(s, [])) for s in seqs}


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, threshold: float, tp: int, fp: int, fn: int) -> "PRPoint":
        precision = tp / (tp + fp) if tp + fp else 1.0
        recall = tp / (tp + fn) if tp + fn else 1.0
        return cls(threshold, precision, recall, tp, fp, fn)


def class_counts(frames: FrameData, class_label: str, cfg: EvalConfig, keep) -> tuple[int, int, int]:
    """(tp, fp, fn) for one class over detections accepted by ``keep``."""
    tp = fp = fn = 0
    for seq in sorted(frames):
        dets, truths = frames[seq]
        kept = [d for d in dets if keep(d)]
        ms = match_frame(kept, truths, cfg.iou_threshold, class_aware=cfg.class_aware,
                         class_mapping=cfg.class_mapping)
        hit_dets, hit_truths = set(), set()
        for pr in ms.pairs:
            if pr.det.class_label == class_label and cfg.true_label(pr.truth) == class_label:
                hit_dets.add(pr.det_index)
                hit_truths.add(pr.truth_index)
        tp += len(hit_dets)
        fp += sum(1 for i, d in enumerate(kept) if d.class_label == class_label and i not in hit_dets)
        fn += sum(1 for i, t in enumerate(truths) if cfg.true_label(t) == class_label and i not in hit_truths)
    return tp, fp, fn


def pr_curve(frames: FrameData, class_label: str, cfg: EvalConfig = EvalConfig()) -> list[PRPoint]:
    points = []
    for t in cfg.confidence_grid:
        tp, fp, fn = class_counts(frames, class_label, cfg, lambda d, t=t: d.confidence >= t)
        points.append(PRPoint.from_counts(t, tp, fp, fn))
    return points


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are predicted labels plus ``not detected``; columns are true labels."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: np.ndarray

    @property
    def proportions(self) -> np.ndarray:
        sums = self.counts.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(sums > 0, self.counts / np.where(sums > 0, sums, 1), 0.0)

    def entry(self, predicted: str, true: str) -> float:
        return float(self.proportions[self.row_labels.index(predicted), self.col_labels.index(true)])


def confusion_labels(frames: FrameData, cfg: EvalConfig) -> tuple[tuple[str, ...], tuple[str, ...]]:
    det_labels = sorted({d.class_label for dets, _ in frames.values() for d in dets})
    true_labels = sorted({cfg.true_label(t) for _, truths in frames.values() for t in truths})
    return tuple(det_labels) + (NOT_DETECTED,), tuple(true_labels)


def confusion_matrix(frames: FrameData, cfg: EvalConfig, objectness_t: float, label_t: float,
                     labels: tuple[tuple[str, ...], tuple[str, ...]] | None = None) -> ConfusionMatrix:
    rows, cols = labels or confusion_labels(frames, cfg)
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    nd = rows.index(NOT_DETECTED)
    for seq in sorted(frames):
        dets, truths = frames[seq]
        kept = [d for d in dets if d.objectness >= objectness_t and d.class_confidence >= label_t]
        ms = match_frame(kept, truths, cfg.iou_threshold, class_aware=cfg.class_aware,
                         class_mapping=cfg.class_mapping)
        for pr in ms.pairs:
            counts[rows.index(pr.det.class_label), cols.index(cfg.true_label(pr.truth))] += 1
        for ti in ms.unmatched_truths:
            counts[nd, cols.index(cfg.true_label(truths[ti]))] += 1
    return ConfusionMatrix(rows, cols, counts)


def confusion_grid(frames: FrameData, cfg: EvalConfig = EvalConfig()) -> dict[tuple[float, float], ConfusionMatrix]:
    labels = confusion_labels(frames, cfg)
    return {
        (to, tl): confusion_matrix(frames, cfg, to, tl, labels)
        for to in cfg.objectness_grid
        for tl in cfg.label_grid
    }


def motion_angle_error(pred, true_motion: tuple[float, float], min_speed: float = 1e-6) -> float | None:
    """Unsigned angle in degrees between predicted and true displacement.

    Returns ``None`` when either vector is shorter than ``min_speed``.
    """
    if isinstance(pred, MotionEstimate):
        px, py = pred.dx, pred.dy
    else:
        px, py = pred
    tx, ty = true_motion
    if math.hypot(px, py) < min_speed or math.hypot(tx, ty) < min_speed:
        return None
    return angle_between_deg(px, py, tx, ty)


@dataclass(frozen=True)
class AngleStats:
    mean_deg: float | None
    median_deg: float | None
    count: int
    excluded: int


def angle_error_stats(frames: FrameData, motions: Mapping[int, Sequence[MotionEstimate | None]],
                      cfg: EvalConfig = EvalConfig()) -> AngleStats:
    """Mean angle error over matched detection/truth pairs that both carry motion.

    ``motions[seq]`` is aligned with the detection list of that frame.
    """
    errors: list[float] = []
    excluded = 0
    for seq in sorted(frames):
        dets, truths = frames[seq]
        ms = match_frame(dets, truths, cfg.iou_threshold, class_aware=cfg.class_aware,
                         class_mapping=cfg.class_mapping)
        frame_motions = motions.get(seq, ())
        for pr in ms.pairs:
            m = frame_motions[pr.det_index] if pr.det_index < len(frame_motions) else None
            if m is None or pr.truth.true_motion is None:
                continue
            err = motion_angle_error(m, pr.truth.true_motion, cfg.min_speed_px)
            if err is None:
                excluded += 1
            else:
                errors.append(err)
    if not errors:
        return AngleStats(None, None, 0, excluded)
    return AngleStats(float(np.mean(errors)), float(np.median(errors)), len(errors), excluded)


def matched_ious(frames: FrameData, cfg: EvalConfig = EvalConfig()) -> list[float]:
    """IOU of every matched pair, frame by frame."""
    out = []
    for seq in sorted(frames):
        dets, truths = frames[seq]
        ms = match_frame(dets, truths, cfg.iou_threshold, class_aware=cfg.class_aware,
                         class_mapping=cfg.class_mapping)
        out.extend(p.iou for p in ms.pairs)
    return out
