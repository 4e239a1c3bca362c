"""Debounced traffic rules over IOU tracklets: wrong way, prohibited surface, illegal stop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geometry import (
    BBox,
    BehaviorEvent,
    Detection,
    EventKind,
    MotionEstimate,
    angle_between_deg,
    iou,
)
from .zones import UNLABELED, ZoneMap, ZoneMeta, zone_of_detection


@dataclass(frozen=True)
class BehaviorParams:
    wrong_way_angle_deg: float = 90.0
    min_speed_px: float = 0.5
    persist_frames: int = 5
    stop_speed_px: float = 0.3
    stop_frames: int = 125
    assoc_iou: float = 0.3
    anchor: str = "bottom_center"

    def __post_init__(self):
        if not 0.0 < self.wrong_way_angle_deg <= 180.0:
            raise ValueError("wrong_way_angle_deg must lie in (0, 180]")
        for name in ("min_speed_px", "stop_speed_px", "assoc_iou"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("persist_frames", "stop_frames"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class Episode:
    """A run of consecutive frames on which one rule's condition held."""

    count: int = 0
    start_seq: int = -1
    zone_id: int = UNLABELED
    total: float = 0.0

    def reset(self) -> None:
        self.count = 0
        self.start_seq = -1
        self.zone_id = UNLABELED
        self.total = 0.0

    def advance(self, seq: int, zone_id: int, value: float = 0.0) -> int:
        if self.count == 0:
            self.start_seq = seq
            self.zone_id = zone_id
        self.count += 1
        self.total += value
        return self.count


@dataclass
class TrackletState:
    tracklet_id: int
    bbox: BBox
    class_label: str
    last_seq: int
    zone_id: int = UNLABELED
    wrong_way: Episode = field(default_factory=Episode)
    surface: Episode = field(default_factory=Episode)
    stopped: Episode = field(default_factory=Episode)

    @property
    def wrong_way_count(self) -> int:
        return self.wrong_way.count

    @property
    def stopped_count(self) -> int:
        return self.stopped.count


def _event(kind: EventKind, state: TrackletState, ep: Episode, seq: int, evidence: dict) -> BehaviorEvent:
    return BehaviorEvent(kind, ep.start_seq, seq, state.bbox, state.class_label, ep.zone_id,
                         evidence, state.tracklet_id)


def wrong_way_deviation(motion: MotionEstimate, zone: ZoneMeta) -> float:
    ax, ay = zone.allowed_direction
    # motion is in image axes (y down); zone directions are y-up
    return angle_between_deg(motion.dx, -motion.dy, ax, ay)


def check_wrong_way(state: TrackletState, motion: MotionEstimate | None, zone: ZoneMeta | None,
                    p: BehaviorParams, seq: int | None = None) -> tuple[TrackletState, BehaviorEvent | None]:
    seq = state.last_seq if seq is None else seq
    ep = state.wrong_way
    if zone is None or zone.allowed_direction is None or motion is None or motion.magnitude < p.min_speed_px:
        ep.reset()
        return state, None
    dev = wrong_way_deviation(motion, zone)
    if dev <= p.wrong_way_angle_deg:
        ep.reset()
        return state, None
    if ep.count and ep.zone_id != zone.zone_id:
        ep.reset()
    if ep.advance(seq, zone.zone_id, dev) == p.persist_frames:
        return state, _event(EventKind.WRONG_WAY, state, ep, seq, {
            "mean_deviation_deg": ep.total / ep.count,
            "frames": float(ep.count),
            "speed_px": motion.magnitude,
        })
    return state, None


def check_prohibited_surface(state: TrackletState, zone: ZoneMeta | None, p: BehaviorParams,
                             seq: int | None = None) -> tuple[TrackletState, BehaviorEvent | None]:
    seq = state.last_seq if seq is None else seq
    ep = state.surface
    if zone is None or state.class_label not in zone.prohibited_classes:
        ep.reset()
        return state, None
    if ep.count and ep.zone_id != zone.zone_id:
        ep.reset()
    if ep.advance(seq, zone.zone_id) == p.persist_frames:
        return state, _event(EventKind.PROHIBITED_SURFACE, state, ep, seq, {
            "frames": float(ep.count),
        })
    return state, None


def check_illegal_stop(state: TrackletState, motion: MotionEstimate | None, zone: ZoneMeta | None,
                       p: BehaviorParams, seq: int | None = None) -> tuple[TrackletState, BehaviorEvent | None]:
    """Absent motion counts as stopped: no trackable displacement was found."""
    seq = state.last_seq if seq is None else seq
    ep = state.stopped
    if zone is None or not zone.no_stopping:
        ep.reset()
        return state, None
    still = motion is None or motion.magnitude < p.stop_speed_px
    if not still:
        ep.reset()
        return state, None
    if ep.count and ep.zone_id != zone.zone_id:
        ep.reset()
    if ep.advance(seq, zone.zone_id) == p.stop_frames:
        return state, _event(EventKind.ILLEGAL_STOP, state, ep, seq, {
            "dwell_frames": float(ep.count),
        })
    return state, None


@dataclass
class Association:
    states: list[TrackletState]   # one per detection, in detection order
    created: list[bool]
    next_id: int


def associate(prev: Sequence[TrackletState], dets: Sequence[Detection], assoc_iou: float,
              next_id: int = 0) -> Association:
    """Greedy same-class IOU matching; unmatched tracklets are dropped."""
    pairs = []
    for ti, t in enumerate(prev):
        for di, d in enumerate(dets):
            if t.class_label != d.class_label:
                continue
            v = iou(t.bbox, d.bbox)
            if v >= assoc_iou:
                pairs.append((-v, t.tracklet_id, di, ti))
    pairs.sort()
    det_to_state: dict[int, TrackletState] = {}
    used_t: set[int] = set()
    for _, _, di, ti in pairs:
        if di in det_to_state or ti in used_t:
            continue
        used_t.add(ti)
        det_to_state[di] = prev[ti]
    states, created = [], []
    for di, d in enumerate(dets):
        st = det_to_state.get(di)
        if st is None:
            st = TrackletState(next_id, d.bbox, d.class_label, d.frame_seq)
            next_id += 1
            created.append(True)
        else:
            st.bbox = d.bbox
            st.last_seq = d.frame_seq
            created.append(False)
        states.append(st)
    return Association(states, created, next_id)


class BehaviorEngine:
    """Sequential rule evaluation over a frame-ordered detection stream."""

    def __init__(self, zmap: ZoneMap, params: BehaviorParams = BehaviorParams(),
                 record_conditions: bool = False):
        self.zmap = zmap
        self.params = params
        self.tracklets: list[TrackletState] = []
        self.next_id = 0
        self.conditions: dict[tuple[int, EventKind], dict[int, bool]] | None = {} if record_conditions else None

    def _record(self, st: TrackletState, seq: int) -> None:
        if self.conditions is None:
            return
        for kind, ep in ((EventKind.WRONG_WAY, st.wrong_way),
                         (EventKind.PROHIBITED_SURFACE, st.surface),
                         (EventKind.ILLEGAL_STOP, st.stopped)):
            self.conditions.setdefault((st.tracklet_id, kind), {})[seq] = ep.count > 0

    def step(self, seq: int, dets: Sequence[Detection],
             motions: Sequence[MotionEstimate | None]) -> tuple[list[BehaviorEvent], list[int]]:
        if len(motions) != len(dets):
            raise ValueError("need one motion entry (or None) per detection")
        assoc = associate(self.tracklets, dets, self.params.assoc_iou, self.next_id)
        self.next_id = assoc.next_id
        self.tracklets = assoc.states
        events: list[BehaviorEvent] = []
        p = self.params
        for det, st, motion, created in zip(dets, assoc.states, motions, assoc.created):
            zid = zone_of_detection(self.zmap, det, p.anchor)
            st.zone_id = zid
            zone = self.zmap.meta(zid) if zid != UNLABELED else None
            found = [check_prohibited_surface(st, zone, p, seq)[1]]
            # a fresh tracklet has no previous box, so its motion is not evidence yet
            if not created:
                found += [check_wrong_way(st, motion, zone, p, seq)[1],
                          check_illegal_stop(st, motion, zone, p, seq)[1]]
            events.extend(ev for ev in found if ev is not None)
            self._record(st, seq)
        return events, [st.tracklet_id for st in assoc.states]
