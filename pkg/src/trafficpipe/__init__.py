"""Streaming traffic video analytics: detections, motion and rule events from raw video."""

from .geometry import (
    BBox,
    BehaviorEvent,
    Detection,
    EventKind,
    Frame,
    GroundTruthBox,
    MotionEstimate,
    PixelFormat,
    anchor_point,
    clip_to_frame,
    iou,
)
from .pipeline import (
    FrameEnvelope,
    PipelineSpec,
    RunStats,
    StageFailure,
    StageSpec,
    Task,
    batch_window,
    build,
    register_stage,
    reorder_accept,
    run,
)
from . import stages  # noqa: E402,F401  registers the built-in stage kinds

__version__ = "0.1.0"

__all__ = [
    "BBox", "BehaviorEvent", "Detection", "EventKind", "Frame", "FrameEnvelope", "GroundTruthBox",
    "MotionEstimate", "PipelineSpec", "PixelFormat", "RunStats", "StageFailure", "StageSpec", "Task",
    "anchor_point", "batch_window", "build", "clip_to_frame", "iou", "register_stage",
    "reorder_accept", "run",
]
