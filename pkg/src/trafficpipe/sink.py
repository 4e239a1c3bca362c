"""Terminal sinks (JSONL logs, annotated video) and offline log summaries.

Log schemas, one JSON object per line:

detections.jsonl  frame_seq, class_label, x_min, y_min, x_max, y_max, objectness,
                  class_confidence, [class_scores], det_index, [tracklet_id]
motions.jsonl     frame_seq, det_index, [tracklet_id], class_label, dx, dy,
                  angle_deg (null when too short), magnitude, support
events.jsonl      camera_id, kind, first_seq, last_seq, first_ms, last_ms,
                  [first_wall, last_wall], class_label, zone_id, tracklet_id,
                  x_min, y_min, x_max, y_max, evidence
run.json          camera_id, fps, frames, start_time
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping

from .detect import detection_to_record
from .geometry import BehaviorEvent, PixelFormat
from .pipeline import FrameEnvelope, Sink
from .videoio.color import gray_to_ycbcr, rgb_to_ycbcr, ycbcr_to_rgb
from .videoio.render import OverlayLayer, render_overlay
from .videoio.y4m import Y4mHeader, write_frame

LOGGER = logging.getLogger(__name__)

LOG_FILES = ("detections.jsonl", "motions.jsonl", "events.jsonl")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=False, separators=(", ", ": "), allow_nan=False)


def event_record(ev: BehaviorEvent, camera_id: str, fps: float, start_time: datetime | None = None) -> dict:
    rec = {
        "camera_id": camera_id,
        "kind": ev.kind.value,
        "first_seq": ev.first_seq,
        "last_seq": ev.last_seq,
        "first_ms": ev.first_seq * 1000.0 / fps,
        "last_ms": ev.last_seq * 1000.0 / fps,
    }
    if start_time is not None:
        rec["first_wall"] = (start_time + timedelta(seconds=ev.first_seq / fps)).isoformat()
        rec["last_wall"] = (start_time + timedelta(seconds=ev.last_seq / fps)).isoformat()
    rec.update({
        "class_label": ev.class_label,
        "zone_id": ev.zone_id,
        "tracklet_id": ev.tracklet_id,
        "x_min": ev.bbox.x_min, "y_min": ev.bbox.y_min, "x_max": ev.bbox.x_max, "y_max": ev.bbox.y_max,
        "evidence": {k: float(v) for k, v in sorted(ev.evidence.items())},
    })
    return rec


class LogSink(Sink):
    """Append-only JSONL logs flushed after every frame."""

    name = "logs"

    def __init__(self, out_dir, detections: str | None = "detect", motions: str | None = "flow",
                 behaviors: str | None = "behaviors", camera_id: str = "cam0", fps: float = 25.0,
                 start_time: str | None = None):
        self.out_dir = Path(out_dir)
        self.sources = (detections, motions, behaviors)
        self.camera_id = camera_id
        self.fps = float(fps)
        self.start_time = datetime.fromisoformat(start_time) if start_time else None
        self._start_text = start_time
        self._fh: dict[str, io.TextIOBase] = {}
        self.frames = 0

    def open(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name in LOG_FILES:
            self._fh[name] = open(self.out_dir / name, "w", encoding="utf-8", newline="\n")

    def write(self, env: FrameEnvelope) -> None:
        det_src, mot_src, beh_src = self.sources
        dets = env.payloads.get(det_src) if det_src else None
        motions = env.payloads.get(mot_src) if mot_src else None
        result = env.payloads.get(beh_src) if beh_src else None
        ids = list(result.tracklet_ids) if result is not None else []
        det_lines, mot_lines, ev_lines = [], [], []
        for i, d in enumerate(dets or ()):
            extra = {"det_index": i}
            if i < len(ids):
                extra["tracklet_id"] = ids[i]
            det_lines.append(_dumps(detection_to_record(d, **extra)))
            m = motions[i] if motions is not None and i < len(motions) else None
            if m is not None:
                rec = {"frame_seq": env.seq, "det_index": i}
                if i < len(ids):
                    rec["tracklet_id"] = ids[i]
                rec.update({"class_label": d.class_label, "dx": m.dx, "dy": m.dy, "angle_deg": m.angle_deg,
                            "magnitude": m.magnitude, "support": m.support})
                mot_lines.append(_dumps(rec))
        for ev in (result.events if result is not None else ()):
            ev_lines.append(_dumps(event_record(ev, self.camera_id, self.fps, self.start_time)))
        for name, lines in zip(LOG_FILES, (det_lines, mot_lines, ev_lines)):
            fh = self._fh[name]
            if lines:
                fh.write("\n".join(lines) + "\n")
            fh.flush()
        self.frames += 1

    def close(self) -> None:
        for fh in self._fh.values():
            fh.close()
        self._fh.clear()
        if self.out_dir.exists():
            meta = {"camera_id": self.camera_id, "fps": self.fps, "frames": self.frames,
                    "start_time": self._start_text}
            (self.out_dir / "run.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


class VideoSink(Sink):
    """Writes an annotated Y4M; the overlay comes from a render stage payload."""

    name = "video"

    def __init__(self, path, overlay: str | None = "render", fps_num: int = 25, fps_den: int = 1):
        self.path = Path(path)
        self.overlay = overlay
        self.fps = (fps_num, fps_den)
        self._fh = None
        self._hdr: Y4mHeader | None = None

    def open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "wb")

    def write(self, env: FrameEnvelope) -> None:
        frame = env.frame
        layer: OverlayLayer | None = env.payloads.get(self.overlay) if self.overlay else None
        if layer is not None and layer.commands:
            rgb = frame if frame.format is PixelFormat.RGB24 else ycbcr_to_rgb(
                frame if frame.format is PixelFormat.YCBCR420 else gray_to_ycbcr(frame))
            out = rgb_to_ycbcr(render_overlay(rgb, layer))
        elif frame.format is PixelFormat.YCBCR420:
            out = frame
        elif frame.format is PixelFormat.GRAY8:
            out = gray_to_ycbcr(frame)
        else:
            out = rgb_to_ycbcr(frame)
        if self._hdr is None:
            self._hdr = Y4mHeader(out.width, out.height, *self.fps)
            self._fh.write(self._hdr.encode())
        write_frame(out, self._hdr, self._fh)
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            if self._hdr is None:
                LOGGER.info("no frames written to %s", self.path)
            self._fh.close()
            self._fh = None


# -- offline summary ----------------------------------------------------------------

@dataclass(frozen=True)
class CountRecord:
    camera_id: str
    bucket_start_s: float
    class_label: str
    count: int
    mean_angle_deg: float | None
    mean_speed_px: float | None


@dataclass(frozen=True)
class EventCountRecord:
    camera_id: str
    bucket_start_s: float
    kind: str
    count: int


@dataclass
class Summary:
    counts: list[CountRecord] = field(default_factory=list)
    events: list[EventCountRecord] = field(default_factory=list)
    malformed: dict[str, int] = field(default_factory=dict)


def _read_jsonl(path: Path, required: tuple[str, ...], malformed: dict[str, int]) -> list[dict]:
    rows = []
    if not path.exists():
        return rows
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict) or any(k not in rec for k in required):
                    raise ValueError("missing fields")
            except ValueError:
                LOGGER.warning("%s:%d: malformed log line skipped", path, line_no)
                malformed[path.name] = malformed.get(path.name, 0) + 1
                continue
            rows.append(rec)
    return rows


def _bucket(seq: int, fps: float, bucket_seconds: float) -> float:
    # small tolerance so boundaries land in the later bucket despite float error
    return math.floor(seq / fps / bucket_seconds + 1e-9) * bucket_seconds


def summarize(log_dir, bucket_seconds: float, fps: float | None = None, camera_id: str | None = None) -> Summary:
    """Per-bucket, per-class distinct tracklet counts plus event counts.

    Detections without a tracklet id each count as their own object.  Direction
    is the circular mean of motion unit vectors (y-up degrees).
    """
    if bucket_seconds <= 0:
        raise ValueError("bucket_seconds must be positive")
    log_dir = Path(log_dir)
    meta = {}
    if (log_dir / "run.json").exists():
        meta = json.loads((log_dir / "run.json").read_text(encoding="utf-8"))
    fps = float(fps if fps is not None else meta.get("fps", 25.0))
    if fps <= 0:
        raise ValueError("fps must be positive")
    cam = camera_id or meta.get("camera_id", "cam0")
    malformed: dict[str, int] = {}
    dets = _read_jsonl(log_dir / "detections.jsonl", ("frame_seq", "class_label"), malformed)
    motions = _read_jsonl(log_dir / "motions.jsonl", ("frame_seq", "class_label", "dx", "dy"), malformed)
    events = _read_jsonl(log_dir / "events.jsonl", ("kind", "first_seq", "last_seq"), malformed)

    objects: dict[tuple[float, str], set] = defaultdict(set)
    for d in dets:
        b = _bucket(int(d["frame_seq"]), fps, bucket_seconds)
        ident = ("t", d["tracklet_id"]) if "tracklet_id" in d else ("d", d["frame_seq"], d.get("det_index", 0))
        objects[(b, d["class_label"])].add(ident)
    vec: dict[tuple[float, str], list[float]] = defaultdict(lambda: [0.0, 0.0, 0.0, 0])
    for m in motions:
        b = _bucket(int(m["frame_seq"]), fps, bucket_seconds)
        acc = vec[(b, m["class_label"])]
        dx, dy = float(m["dx"]), float(m["dy"])
        mag = math.hypot(dx, dy)
        if mag > 0:
            acc[0] += dx / mag
            acc[1] += -dy / mag
        acc[2] += mag
        acc[3] += 1
    counts = []
    for key in sorted(set(objects) | set(vec)):
        b, label = key
        acc = vec.get(key)
        angle = speed = None
        if acc is not None and acc[3]:
            speed = acc[2] / acc[3]
            if math.hypot(acc[0], acc[1]) > 1e-12:
                angle = math.degrees(math.atan2(acc[1], acc[0])) % 360.0
        counts.append(CountRecord(cam, b, label, len(objects.get(key, ())), angle, speed))
    ev_counts: dict[tuple[float, str], int] = defaultdict(int)
    for e in events:
        ev_counts[(_bucket(int(e["last_seq"]), fps, bucket_seconds), str(e["kind"]))] += 1
    ev_rows = [EventCountRecord(cam, b, k, n) for (b, k), n in sorted(ev_counts.items())]
    return Summary(counts, ev_rows, malformed)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


COUNT_HEADER = ("camera_id", "bucket_start_s", "class_label", "count", "mean_angle_deg", "mean_speed_px")
EVENT_HEADER = ("camera_id", "bucket_start_s", "kind", "count")


def _csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def counts_csv(summary: Summary) -> str:
    return _csv(COUNT_HEADER, ((c.camera_id, c.bucket_start_s, c.class_label, c.count, c.mean_angle_deg,
                                c.mean_speed_px) for c in summary.counts))


def events_csv(summary: Summary) -> str:
    return _csv(EVENT_HEADER, ((e.camera_id, e.bucket_start_s, e.kind, e.count) for e in summary.events))


def write_summary(summary: Summary, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"counts": out / "counts.csv", "events": out / "event_counts.csv"}
    paths["counts"].write_text(counts_csv(summary), encoding="utf-8")
    paths["events"].write_text(events_csv(summary), encoding="utf-8")
    return paths


def read_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_log_detections(path) -> Mapping[int, list]:
    from .detect import load_detections
    return load_detections(path)
