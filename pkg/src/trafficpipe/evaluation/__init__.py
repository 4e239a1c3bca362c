from .cvat import CvatError, attach_motions, load_cvat, load_motions, parse_cvat, save_cvat, write_cvat
from .matching import MatchPair, MatchSet, default_confidence, match_frame
from .metrics import (
    NOT_DETECTED,
    AngleStats,
    ConfusionMatrix,
    EvalConfig,
    PRPoint,
    angle_error_stats,
    confusion_grid,
    confusion_matrix,
    group_frames,
    matched_ious,
    motion_angle_error,
    pr_curve,
)
from .report import eval_report

__all__ = [
    "NOT_DETECTED", "AngleStats", "ConfusionMatrix", "CvatError", "EvalConfig", "MatchPair",
    "MatchSet", "PRPoint", "angle_error_stats", "attach_motions", "confusion_grid",
    "confusion_matrix", "default_confidence", "eval_report", "group_frames", "load_cvat", "matched_ious",
    "load_motions", "match_frame", "motion_angle_error", "parse_cvat", "pr_curve",
    "save_cvat", "write_cvat",
]
