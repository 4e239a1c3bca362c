"""Confidence-ordered greedy IOU matching of detections to ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from ..geometry import Detection, GroundTruthBox, iou

ConfidenceFn = Callable[[Detection], float]


def default_confidence(det: Detection) -> float:
    return det.objectness * det.class_confidence


@dataclass(frozen=True)
class MatchPair:
    det: Detection
    truth: GroundTruthBox
    iou: float
    det_index: int
    truth_index: int


@dataclass
class MatchSet:
    pairs: list[MatchPair] = field(default_factory=list)
    unmatched_dets: list[int] = field(default_factory=list)
    unmatched_truths: list[int] = field(default_factory=list)


def detection_order(dets: Sequence[Detection], confidence_fn: ConfidenceFn = default_confidence) -> list[int]:
    """Indices by descending confidence; ties broken by bbox then label."""
    return sorted(range(len(dets)),
                  key=lambda i: (-confidence_fn(dets[i]), dets[i].bbox.as_tuple(), dets[i].class_label, i))


def match_frame(dets: Sequence[Detection], truths: Sequence[GroundTruthBox], iou_threshold: float,
                confidence_fn: ConfidenceFn = default_confidence, class_aware: bool = False,
                class_mapping: Mapping[str, str] | None = None) -> MatchSet:
    """Each detection, most confident first, takes the free truth of highest IOU.

    Matching ignores class unless ``class_aware``; an IOU equal to the
    threshold counts as a match, and equal IOUs go to the earlier truth.
    """
    mapping = class_mapping or {}
    free = [True] * len(truths)
    ms = MatchSet()
    for di in detection_order(dets, confidence_fn):
        d = dets[di]
        best, best_iou = -1, -1.0
        for ti, t in enumerate(truths):
            if not free[ti]:
                continue
            if class_aware and mapping.get(t.class_label, t.class_label) != d.class_label:
                continue
            v = iou(d.bbox, t.bbox)
            if v > best_iou:
                best, best_iou = ti, v
        if best >= 0 and best_iou >= iou_threshold:
            free[best] = False
            ms.pairs.append(MatchPair(d, truths[best], best_iou, di, best))
        else:
            ms.unmatched_dets.append(di)
    ms.unmatched_truths = [ti for ti, f in enumerate(free) if f]
    return ms
