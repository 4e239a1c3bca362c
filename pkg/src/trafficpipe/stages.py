"""Built-in stage kinds: detection ingestion, blob detection, NMS, flow, behaviors, render."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .behaviors import BehaviorEngine, BehaviorParams
from .detect import BackgroundModel, blob_detect, load_detections, nms
from .flow import FlowParams, build_pyramid, estimate_box_motions, usable_levels
from .geometry import BehaviorEvent, Detection, MotionEstimate, anchor_point
from .pipeline import FrameEnvelope, PipelineConfigError, Task, register_stage
from .videoio.render import ArrowCmd, BoxCmd, MaskTintCmd, OverlayLayer
from .zones import ZoneError, ZoneMap, load_zone_map

LOGGER = logging.getLogger(__name__)


def _pick(cls, params: Mapping[str, Any], prefix: str = ""):
    """Build a params dataclass from the matching keys of a stage's params."""
    names = {f.name for f in fields(cls)}
    kw = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix) and k[len(prefix):] in names}
    return cls(**kw)


def _check_keys(kind: str, params: Mapping[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise PipelineConfigError(f"{kind} stage: unknown parameter(s) {unknown}")


_FLOW_KEYS = {f.name for f in fields(FlowParams)}
_BEHAVIOR_KEYS = {f.name for f in fields(BehaviorParams)}


class DetectionsFileTask(Task):
    """Serves detections produced offline, one JSON record per line."""

    def __init__(self, params: Mapping[str, Any]):
        _check_keys("detections_file", params, {"path", "dets"})
        if "dets" in params:
            self.by_seq = {int(k): list(v) for k, v in params["dets"].items()}
        elif "path" in params:
            self.by_seq = load_detections(params["path"])
        else:
            raise PipelineConfigError("detections_file stage needs a 'path'")
        self._last_seq = -1

    def process(self, env: FrameEnvelope) -> list[Detection]:
        self._last_seq = max(self._last_seq, env.seq)
        return list(self.by_seq.get(env.seq, ()))

    def close(self) -> None:
        extra = [s for s in self.by_seq if s > self._last_seq]
        if extra and self._last_seq >= 0:
            LOGGER.warning("%d detection frame(s) beyond the end of the stream (first %d)",
                           len(extra), min(extra))


class BlobTask(Task):
    stateful = True

    def __init__(self, params: Mapping[str, Any]):
        _check_keys("blob", params, {"alpha", "k", "var_floor", "warmup_frames", "min_area", "label"})
        self.min_area = int(params.get("min_area", 50))
        if self.min_area < 1:
            raise PipelineConfigError("blob stage: min_area must be >= 1")
        self.label = str(params.get("label", "object"))
        try:
            self.model = _pick(BackgroundModel, {k: v for k, v in params.items()
                                                 if k in ("alpha", "k", "var_floor", "warmup_frames")})
        except ValueError as exc:
            raise PipelineConfigError(f"blob stage: {exc}") from None

    def process(self, env: FrameEnvelope) -> list[Detection]:
        return blob_detect(self.model, env.gray(), self.min_area, env.seq, self.label)


class NmsTask(Task):
    def __init__(self, params: Mapping[str, Any]):
        _check_keys("nms", params, {"detections", "iou_threshold"})
        self.source = str(params.get("detections", "detect"))
        self.requires = (self.source,)
        self.threshold = float(params.get("iou_threshold", 0.5))

    def process(self, env: FrameEnvelope) -> list[Detection]:
        return nms(env.payloads.get(self.source) or [], self.threshold)


class FlowTask(Task):
    """Per-box motion between the previous frame and this one.

    Keeps the previous frame's pyramid, so it must see every frame in order.
    """

    stateful = True

    def __init__(self, params: Mapping[str, Any]):
        _check_keys("flow", params, _FLOW_KEYS | {"detections", "min_support"})
        self.source = str(params.get("detections", "detect"))
        self.requires = (self.source,)
        self.min_support = int(params.get("min_support", 3))
        try:
            self.params = _pick(FlowParams, params)
        except ValueError as exc:
            raise PipelineConfigError(f"flow stage: {exc}") from None
        self._prev: list[np.ndarray] | None = None
        self._prev_seq: int | None = None

    def process(self, env: FrameEnvelope) -> list[MotionEstimate | None]:
        gray = env.gray()
        pyr = build_pyramid(gray, usable_levels(gray.width, gray.height, self.params))
        dets = env.payloads.get(self.source) or []
        contiguous = self._prev is not None and self._prev_seq == env.seq - 1
        if contiguous and dets:
            motions = estimate_box_motions(self._prev, pyr, [d.bbox for d in dets], self.params,
                                           self.min_support)
        else:
            motions = [None] * len(dets)
        self._prev, self._prev_seq = pyr, env.seq
        return motions


@dataclass(frozen=True)
class BehaviorResult:
    events: list[BehaviorEvent]
    tracklet_ids: list[int]


def resolve_zone_map(params: Mapping[str, Any]) -> ZoneMap | None:
    if "zone_map" in params:
        return params["zone_map"]
    if "zones_raster" in params:
        if "zones_meta" not in params:
            raise PipelineConfigError("zones_raster given without zones_meta")
        size = params.get("frame_size")
        if size is None:
            raise PipelineConfigError("loading zones from files needs the frame_size")
        return load_zone_map(params["zones_raster"], params["zones_meta"], int(size[0]), int(size[1]))
    return None


class BehaviorTask(Task):
    stateful = True

    def __init__(self, params: Mapping[str, Any]):
        _check_keys("behaviors", params, _BEHAVIOR_KEYS | {
            "detections", "motions", "zone_map", "zones_raster", "zones_meta", "frame_size"})
        self.det_source = str(params.get("detections", "detect"))
        self.motion_source = params.get("motions", "flow")
        self.requires = (self.det_source,) + ((str(self.motion_source),) if self.motion_source else ())
        try:
            self.params = _pick(BehaviorParams, params)
            self.zmap = resolve_zone_map(params)
        except (ValueError, ZoneError) as exc:
            raise PipelineConfigError(f"behaviors stage: {exc}") from None
        self.engine: BehaviorEngine | None = None

    def process(self, env: FrameEnvelope) -> BehaviorResult:
        if self.engine is None:
            zmap = self.zmap or ZoneMap.empty(env.frame.width, env.frame.height)
            if (zmap.width, zmap.height) != (env.frame.width, env.frame.height):
                raise ZoneError(f"zone map is {zmap.width}x{zmap.height}, "
                                f"stream is {env.frame.width}x{env.frame.height}")
            self.engine = BehaviorEngine(zmap, self.params)
        dets = env.payloads.get(self.det_source) or []
        motions = (env.payloads.get(self.motion_source) if self.motion_source else None) or [None] * len(dets)
        events, ids = self.engine.step(env.seq, dets, motions)
        return BehaviorResult(events, ids)


EVENT_COLOR = (255, 0, 0)
BOX_COLOR = (0, 255, 0)
ARROW_COLOR = (255, 255, 0)
ZONE_PALETTE = ((90, 90, 90), (0, 120, 255), (255, 140, 0), (200, 0, 200), (0, 200, 120))


class RenderTask(Task):
    """Builds an overlay layer: zone tint, boxes, motion arrows, events in red."""

    def __init__(self, params: Mapping[str, Any]):
        _check_keys("render", params, {"detections", "motions", "behaviors", "zone_map", "zones_raster",
                                       "zones_meta", "frame_size", "tint_alpha", "arrow_scale"})
        self.det_source = str(params.get("detections", "detect"))
        self.motion_source = params.get("motions")
        self.behavior_source = params.get("behaviors")
        self.requires = tuple(str(s) for s in (self.det_source, self.motion_source, self.behavior_source) if s)
        self.alpha = float(params.get("tint_alpha", 0.25))
        self.arrow_scale = float(params.get("arrow_scale", 4.0))
        try:
            self.zmap = resolve_zone_map(params)
        except (ValueError, ZoneError) as exc:
            raise PipelineConfigError(f"render stage: {exc}") from None

    def process(self, env: FrameEnvelope) -> OverlayLayer:
        cmds: list = []
        if self.zmap is not None:
            palette = {zid: ZONE_PALETTE[zid % len(ZONE_PALETTE)] for zid in self.zmap.zones}
            cmds.append(MaskTintCmd(self.zmap.raster, palette, self.alpha))
        dets = env.payloads.get(self.det_source) or []
        motions = env.payloads.get(self.motion_source) if self.motion_source else None
        result = env.payloads.get(self.behavior_source) if self.behavior_source else None
        flagged = set()
        ids: Sequence[int] = ()
        if result is not None:
            ids = result.tracklet_ids
            flagged = {e.tracklet_id for e in result.events}
        for i, d in enumerate(dets):
            tid = ids[i] if i < len(ids) else None
            color = EVENT_COLOR if tid is not None and tid in flagged else BOX_COLOR
            label = d.class_label if tid is None else f"{d.class_label} {tid}"
            cmds.append(BoxCmd(d.bbox, color, label.upper()))
            m = motions[i] if motions is not None and i < len(motions) else None
            if m is not None and m.angle_deg is not None:
                cx, cy = anchor_point(d.bbox)
                cmds.append(ArrowCmd((cx, (d.bbox.y_min + d.bbox.y_max) / 2.0),
                                     m.dx * self.arrow_scale, m.dy * self.arrow_scale, ARROW_COLOR))
        return OverlayLayer(tuple(cmds))


register_stage("detections_file")(DetectionsFileTask)
register_stage("blob")(BlobTask)
register_stage("nms")(NmsTask)
register_stage("flow")(FlowTask)
register_stage("behaviors")(BehaviorTask)
register_stage("render")(RenderTask)

STATEFUL_KINDS = frozenset({"blob", "flow", "behaviors"})
ZONE_KINDS = frozenset({"behaviors", "render"})
