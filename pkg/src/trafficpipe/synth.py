"""Deterministic synthetic traffic scenes with exact ground truth.

Actors are textured rectangles moving along piecewise-linear tracks over a
flat or noise-textured background.  Everything is a function of the scene
spec and its seeds, so two runs produce identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .behaviors import BehaviorParams
from .detect import save_detections
from .evaluation.cvat import save_cvat, save_motions
from .geometry import BBox, Detection, Frame, GroundTruthBox, clip_to_frame, round_half_away
from .videoio.color import gray_to_ycbcr
from .videoio.y4m import Y4mHeader, write_y4m
from .zones import Surface, ZoneMap, ZoneMeta, meta_document, paint_rect, save_zone_map


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class ActorSpec:
    """``waypoints`` are (frame, x, y) of the box's top-left corner; frames strictly increase."""

    class_label: str
    width: int
    height: int
    waypoints: tuple[tuple[float, float, float], ...]
    texture_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(tuple(float(v) for v in w) for w in self.waypoints))
        if self.width < 1 or self.height < 1:
            raise SceneError(f"actor {self.class_label!r}: size must be positive")
        if not self.waypoints:
            raise SceneError(f"actor {self.class_label!r}: needs at least one waypoint")
        frames = [w[0] for w in self.waypoints]
        if any(f != int(f) or f < 0 for f in frames):
            raise SceneError(f"actor {self.class_label!r}: waypoint frames must be non-negative integers")
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise SceneError(f"actor {self.class_label!r}: waypoint frames must strictly increase")

    @classmethod
    def from_segments(cls, class_label: str, width: int, height: int, start_frame: int,
                      start_xy: tuple[float, float], segments: Sequence[tuple[int, float, float]],
                      texture_seed: int = 0) -> "ActorSpec":
        """Build waypoints from (frames, vx, vy) constant-velocity segments."""
        f, (x, y) = start_frame, start_xy
        pts = [(f, x, y)]
        for n, vx, vy in segments:
            f, x, y = f + n, x + n * vx, y + n * vy
            pts.append((f, x, y))
        return cls(class_label, width, height, tuple(pts), texture_seed)

    @property
    def first_frame(self) -> int:
        return int(self.waypoints[0][0])

    @property
    def last_frame(self) -> int:
        return int(self.waypoints[-1][0])

    def position(self, frame: int) -> tuple[float, float] | None:
        if not self.first_frame <= frame <= self.last_frame:
            return None
        pts = self.waypoints
        for (f0, x0, y0), (f1, x1, y1) in zip(pts, pts[1:]):
            if f0 <= frame <= f1:
                u = (frame - f0) / (f1 - f0)
                return x0 + u * (x1 - x0), y0 + u * (y1 - y0)
        return pts[0][1], pts[0][2]

    def pixel_position(self, frame: int) -> tuple[int, int] | None:
        pos = self.position(frame)
        if pos is None:
            return None
        return int(round_half_away(pos[0])), int(round_half_away(pos[1]))

    def to_json(self) -> dict:
        return {"class_label": self.class_label, "width": self.width, "height": self.height,
                "waypoints": [list(w) for w in self.waypoints], "texture_seed": self.texture_seed}

    @classmethod
    def from_json(cls, d: Mapping) -> "ActorSpec":
        return cls(str(d["class_label"]), int(d["width"]), int(d["height"]),
                   tuple(tuple(w) for w in d["waypoints"]), int(d.get("texture_seed", 0)))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    width: int
    height: int
    frame_count: int
    fps: float = 25.0
    background: str = "constant"          # or "texture"
    background_value: int = 60
    background_seed: int = 0
    actors: tuple[ActorSpec, ...] = ()
    zones: ZoneMap | None = None
    noise_sigma: float = 0.0
    seed: int = 0
    behavior: BehaviorParams = field(default_factory=BehaviorParams)

    def __post_init__(self):
        object.__setattr__(self, "actors", tuple(self.actors))
        if self.width <= 0 or self.height <= 0 or self.width % 2 or self.height % 2:
            raise SceneError("scene width and height must be positive and even")
        if self.frame_count < 0:
            raise SceneError("frame_count must be >= 0")
        if self.fps <= 0:
            raise SceneError("fps must be positive")
        if self.background not in ("constant", "texture"):
            raise SceneError(f"unknown background {self.background!r}")
        if self.noise_sigma < 0:
            raise SceneError("noise_sigma must be >= 0")
        if self.zones is not None and (self.zones.width, self.zones.height) != (self.width, self.height):
            raise SceneError("zone map dimensions differ from the scene")
        for i, a in enumerate(self.actors):
            if a.width > self.width or a.height > self.height:
                raise SceneError(f"actor {i} ({a.class_label}) is larger than the frame")
            x, y = a.pixel_position(a.first_frame)
            if x < 0 or y < 0 or x + a.width > self.width or y + a.height > self.height:
                raise SceneError(f"actor {i} ({a.class_label}) starts outside the frame")

    def to_json(self) -> dict:
        doc = {
            "width": self.width, "height": self.height, "frame_count": self.frame_count,
            "fps": self.fps, "background": self.background, "background_value": self.background_value,
            "background_seed": self.background_seed, "noise_sigma": self.noise_sigma, "seed": self.seed,
            "actors": [a.to_json() for a in self.actors],
            "behavior": {k: getattr(self.behavior, k) for k in self.behavior.__dataclass_fields__},
        }
        if self.zones is not None:
            doc["zones"] = {"raster_rle": _rle(self.zones.raster), **meta_document(self.zones)}
        return doc

    @classmethod
    def from_json(cls, d: Mapping) -> "SceneSpec":
        w, h = int(d["width"]), int(d["height"])
        zmap = None
        if d.get("zones") is not None:
            zmap = zones_from_json(d["zones"], w, h)
        return cls(
            width=w, height=h, frame_count=int(d["frame_count"]), fps=float(d.get("fps", 25.0)),
            background=d.get("background", "constant"), background_value=int(d.get("background_value", 60)),
            background_seed=int(d.get("background_seed", 0)), noise_sigma=float(d.get("noise_sigma", 0.0)),
            seed=int(d.get("seed", 0)), actors=tuple(ActorSpec.from_json(a) for a in d.get("actors", ())),
            zones=zmap, behavior=BehaviorParams(**d.get("behavior", {})),
        )


def _rle(raster: np.ndarray) -> list[list[int]]:
    flat = raster.ravel()
    runs: list[list[int]] = []
    for v in flat.tolist():
        if runs and runs[-1][0] == v:
            runs[-1][1] += 1
        else:
            runs.append([v, 1])
    return runs


def zones_from_json(doc: Mapping, width: int, height: int) -> ZoneMap:
    """Zones given either as run-length raster or as painted rectangles."""
    raster = np.zeros((height, width), dtype=np.uint8)
    if "raster_rle" in doc:
        vals = np.concatenate([np.full(n, v, dtype=np.uint8) for v, n in doc["raster_rle"]]) \
            if doc["raster_rle"] else np.zeros(0, np.uint8)
        if vals.size != width * height:
            raise SceneError("zone raster_rle does not cover the frame")
        raster = vals.reshape(height, width)
    for r in doc.get("rects", ()):
        paint_rect(raster, int(r["zone_id"]), int(r["x0"]), int(r["y0"]), int(r["x1"]), int(r["y1"]))
    metas = {int(m["zone_id"]): ZoneMeta.from_json(m) for m in doc.get("zones", ())}
    return ZoneMap(raster, metas)


def load_scene_spec(path) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        return SceneSpec.from_json(json.load(fh))


def save_scene_spec(spec: SceneSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=1)
        fh.write("\n")


def smooth_noise(shape: tuple[int, int], seed: int, lo: int, hi: int) -> np.ndarray:
    """Seeded noise, lightly blurred, stretched to [lo, hi]."""
    rng = np.random.default_rng(seed)
    raw = ndimage.uniform_filter(rng.random(shape), size=3, mode="nearest")
    span = raw.max() - raw.min()
    unit = (raw - raw.min()) / span if span > 0 else np.zeros(shape)
    return np.floor(lo + unit * (hi - lo) + 0.5).astype(np.uint8)


def actor_texture(actor: ActorSpec) -> np.ndarray:
    return smooth_noise((actor.height, actor.width), actor.texture_seed, 140, 250)


def textured_pair(width: int, height: int, shift: tuple[int, int], seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Two gray images where the second is the first moved by an integer ``shift``."""
    sx, sy = shift
    m = max(abs(sx), abs(sy))
    big = smooth_noise((height + 2 * m, width + 2 * m), seed, 0, 255)
    a = big[m:m + height, m:m + width]
    b = big[m - sy:m - sy + height, m - sx:m - sx + width]
    return a.copy(), b.copy()


@dataclass
class Scene:
    spec: SceneSpec
    frames: list[Frame]
    truths: list[GroundTruthBox]
    expected_events: list[dict]

    @property
    def zones(self) -> ZoneMap:
        return self.spec.zones if self.spec.zones is not None else ZoneMap.empty(self.spec.width, self.spec.height)

    def truths_at(self, seq: int) -> list[GroundTruthBox]:
        return [t for t in self.truths if t.frame_seq == seq]


def _background(spec: SceneSpec) -> np.ndarray:
    if spec.background == "texture":
        return smooth_noise((spec.height, spec.width), spec.background_seed, 20, 100)
    return np.full((spec.height, spec.width), spec.background_value, dtype=np.uint8)


def _true_motion(actor: ActorSpec, f: int) -> tuple[float, float]:
    cur = actor.pixel_position(f)
    prev = actor.pixel_position(f - 1)
    if prev is not None:
        return float(cur[0] - prev[0]), float(cur[1] - prev[1])
    nxt = actor.pixel_position(f + 1)
    if nxt is not None:
        return float(nxt[0] - cur[0]), float(nxt[1] - cur[1])
    return 0.0, 0.0


def render_luma(spec: SceneSpec, f: int, background: np.ndarray | None = None,
                textures: Sequence[np.ndarray] | None = None) -> np.ndarray:
    img = (_background(spec) if background is None else background).copy()
    textures = textures or [actor_texture(a) for a in spec.actors]
    for a, tex in zip(spec.actors, textures):
        pos = a.pixel_position(f)
        if pos is None:
            continue
        x, y = pos
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = min(x + a.width, spec.width), min(y + a.height, spec.height)
        if x1 > x0 and y1 > y0:
            img[y0:y1, x0:x1] = tex[y0 - y:y1 - y, x0 - x:x1 - x]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, f])
        noisy = img + rng.normal(0.0, spec.noise_sigma, img.shape)
        img = np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8)
    return img


def generate(spec: SceneSpec) -> Scene:
    bg = _background(spec)
    textures = [actor_texture(a) for a in spec.actors]
    frames = []
    for f in range(spec.frame_count):
        luma = render_luma(spec, f, bg, textures)
        ts = f * 1000.0 / spec.fps
        frames.append(gray_to_ycbcr(Frame.from_gray(luma, seq=f, timestamp_ms=ts)))
    truths = []
    for f in range(spec.frame_count):
        for tid, a in enumerate(spec.actors):
            pos = a.pixel_position(f)
            if pos is None:
                continue
            box = clip_to_frame(BBox(pos[0], pos[1], pos[0] + a.width, pos[1] + a.height),
                                spec.width, spec.height)
            if box is not None:
                truths.append(GroundTruthBox(f, box, a.class_label, tid, _true_motion(a, f)))
    events = expected_events(truths, spec.zones, spec.behavior) if spec.zones is not None else []
    return Scene(spec, frames, truths, events)


# -- independent rule replay on exact trajectories ---------------------------------

def _round_away(v: float) -> int:
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def _zone_lookup(raster: np.ndarray, box: BBox, anchor: str) -> int:
    x = (box.x_min + box.x_max) / 2.0
    y = box.y_max if anchor == "bottom_center" else (box.y_min + box.y_max) / 2.0
    col, row = _round_away(x), _round_away(y)
    h, w = raster.shape
    if 0 <= row < h and 0 <= col < w:
        return int(raster[row, col])
    return 0


def _deviation(motion: tuple[float, float], direction: tuple[float, float]) -> float:
    # flip image dy into the y-up convention used by zone directions
    mx, my = motion[0], -motion[1]
    dot = (mx * direction[0] + my * direction[1]) / math.hypot(mx, my)
    return math.degrees(math.acos(max(-1.0, min(1.0, dot))))


def expected_events(truths: Sequence[GroundTruthBox], zmap: ZoneMap, params: BehaviorParams) -> list[dict]:
    """Replay the rules per actor on its exact boxes and displacements.

    An actor's first visible frame carries no motion evidence (there is no
    earlier box to compare against), so motion rules start on its second.
    """
    by_track: dict[int, list[GroundTruthBox]] = {}
    for t in truths:
        by_track.setdefault(t.track_id, []).append(t)
    events = []
    for tid in sorted(by_track):
        rows = sorted(by_track[tid], key=lambda t: t.frame_seq)
        runs: dict[str, tuple[int, int, int, float]] = {}   # kind -> (zone, start, length, total)
        prev_seq = None
        for t in rows:
            zid = _zone_lookup(zmap.raster, t.bbox, params.anchor)
            meta = zmap.zones.get(zid) if zid else None
            fresh = prev_seq is None or t.frame_seq != prev_seq + 1
            if fresh:
                runs = {}
            prev_seq = t.frame_seq
            dx, dy = t.true_motion
            speed = math.hypot(dx, dy)
            conds: dict[str, tuple[bool, float]] = {}
            conds["PROHIBITED_SURFACE"] = (meta is not None and t.class_label in meta.prohibited_classes, 0.0)
            if not fresh:
                dev = 0.0
                ww = (meta is not None and meta.allowed_direction is not None and speed >= params.min_speed_px)
                if ww:
                    dev = _deviation((dx, dy), meta.allowed_direction)
                    ww = dev > params.wrong_way_angle_deg
                conds["WRONG_WAY"] = (ww, dev)
                conds["ILLEGAL_STOP"] = (meta is not None and meta.no_stopping and speed < params.stop_speed_px, 0.0)
            for kind, (ok, value) in conds.items():
                run = runs.get(kind)
                if not ok:
                    runs.pop(kind, None)
                    continue
                if run is None or run[0] != zid:
                    run = (zid, t.frame_seq, 0, 0.0)
                run = (zid, run[1], run[2] + 1, run[3] + value)
                runs[kind] = run
                need = params.stop_frames if kind == "ILLEGAL_STOP" else params.persist_frames
                if run[2] == need:
                    evidence = {"frames": float(need)}
                    if kind == "WRONG_WAY":
                        evidence = {"mean_deviation_deg": run[3] / need, "frames": float(need)}
                    elif kind == "ILLEGAL_STOP":
                        evidence = {"dwell_frames": float(need)}
                    events.append({
                        "kind": kind, "track_id": tid, "class_label": t.class_label, "zone_id": zid,
                        "first_seq": run[1], "last_seq": t.frame_seq,
                        "bbox": list(t.bbox.as_tuple()), "evidence": evidence,
                    })
    events.sort(key=lambda e: (e["last_seq"], e["track_id"], e["kind"]))
    return events


def event_key(e: Mapping) -> tuple:
    """Identity of an event for multiset comparison between oracle and pipeline."""
    return (str(e["kind"]), str(e["class_label"]), int(e["zone_id"]), int(e["first_seq"]), int(e["last_seq"]))


# -- fixture output ----------------------------------------------------------------

SCENE_FILES = {
    "video": "video.y4m",
    "truth": "truth.xml",
    "motions": "motions.json",
    "zones_raster": "zones.pgm",
    "zones_meta": "zones.json",
    "expected_events": "expected_events.json",
    "detections": "detections.jsonl",
    "spec": "scene.json",
}


def perfect_detections(truths: Sequence[GroundTruthBox]) -> list[Detection]:
    return [Detection(t.frame_seq, t.bbox, t.class_label, 1.0, 1.0) for t in truths]


def save_scene(scene: Scene, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in SCENE_FILES.items()}
    spec = scene.spec
    num, den = _fps_ratio(spec.fps)
    write_y4m(paths["video"], scene.frames, Y4mHeader(spec.width, spec.height, num, den))
    save_cvat(paths["truth"], scene.truths, spec.frame_count)
    save_motions(paths["motions"], scene.truths)
    save_zone_map(scene.zones, paths["zones_raster"], paths["zones_meta"])
    with open(paths["expected_events"], "w", encoding="utf-8") as fh:
        json.dump({"events": scene.expected_events}, fh, indent=1)
        fh.write("\n")
    save_detections(paths["detections"], perfect_detections(scene.truths))
    save_scene_spec(spec, paths["spec"])
    return paths


def _fps_ratio(fps: float) -> tuple[int, int]:
    if float(fps).is_integer():
        return int(fps), 1
    from fractions import Fraction
    fr = Fraction(fps).limit_denominator(1001)
    return fr.numerator, fr.denominator


def load_expected_events(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)["events"]


# -- detection perturbation ----------------------------------------------------------

def _overlaps(box: BBox, others: Sequence[BBox]) -> bool:
    return any(box.x_min < o.x_max and o.x_min < box.x_max and box.y_min < o.y_max and o.y_min < box.y_max
               for o in others)


def perturb_detections(truths: Sequence[GroundTruthBox], fp_rate: float, miss_rate: float,
                       jitter_px: float, conf_model: str = "uniform", seed: int = 0,
                       frame_size: tuple[int, int] | None = None) -> list[Detection]:
    """Degrade ground truth into a detection set with known statistics.

    Each truth is dropped with probability ``miss_rate``; survivors are moved
    by exactly ``jitter_px`` in a random direction.  Each truth also spawns,
    with probability ``fp_rate``, a same-label false positive that overlaps no
    truth of its frame.  Under ``conf_model="uniform"`` true detections get
    objectness U(0.5, 1) and false ones U(0, 1); ``"constant"`` gives 1.0.
    """
    if not (0.0 <= fp_rate <= 1.0 and 0.0 <= miss_rate <= 1.0):
        raise ValueError("rates must lie in [0, 1]")
    if conf_model not in ("uniform", "constant"):
        raise ValueError(f"unknown conf_model {conf_model!r}")
    rng = np.random.default_rng(seed)
    by_frame: dict[int, list[BBox]] = {}
    for t in truths:
        by_frame.setdefault(t.frame_seq, []).append(t.bbox)
    if frame_size is None:
        frame_size = (int(math.ceil(max((t.bbox.x_max for t in truths), default=1))),
                      int(math.ceil(max((t.bbox.y_max for t in truths), default=1))))
    fw, fh = frame_size
    out: list[Detection] = []
    for t in truths:
        missed = rng.random() < miss_rate
        theta = rng.uniform(0.0, 2.0 * math.pi)
        tp_conf = rng.uniform(0.5, 1.0) if conf_model == "uniform" else 1.0
        spawn_fp = rng.random() < fp_rate
        fp_conf = rng.uniform(0.0, 1.0) if conf_model == "uniform" else 1.0
        if not missed:
            box = t.bbox.translated(jitter_px * math.cos(theta), jitter_px * math.sin(theta))
            out.append(Detection(t.frame_seq, box, t.class_label, float(tp_conf), 1.0))
        if spawn_fp:
            w, h = t.bbox.width, t.bbox.height
            if w >= fw or h >= fh:
                continue
            for _ in range(100):
                x = rng.uniform(0.0, fw - w)
                y = rng.uniform(0.0, fh - h)
                cand = BBox(x, y, x + w, y + h)
                if not _overlaps(cand, by_frame[t.frame_seq]):
                    out.append(Detection(t.frame_seq, cand, t.class_label, float(fp_conf), 1.0))
                    break
    out.sort(key=lambda d: d.frame_seq)
    return out


def expected_pr(miss_rate: float, fp_rate: float, threshold: float,
                conf_model: str = "uniform") -> tuple[float, float]:
    """Closed-form (precision, recall) of ``perturb_detections`` at zero jitter."""
    if conf_model == "constant":
        tp_pass = fp_pass = 1.0 if threshold <= 1.0 else 0.0
    else:
        tp_pass = 1.0 if threshold <= 0.5 else max(0.0, (1.0 - threshold) / 0.5)
        fp_pass = max(0.0, 1.0 - threshold)
    tp = (1.0 - miss_rate) * tp_pass
    fp = fp_rate * fp_pass
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    return precision, tp


def random_truths(n: int, width: int, height: int, seed: int = 0, per_frame: int = 4,
                  labels: Sequence[str] = ("car",), size_range: tuple[int, int] = (10, 30)) -> list[GroundTruthBox]:
    """``n`` non-overlapping random boxes, ``per_frame`` to a frame."""
    rng = np.random.default_rng(seed)
    out: list[GroundTruthBox] = []
    frame = 0
    placed: list[BBox] = []
    while len(out) < n:
        if len(placed) == per_frame:
            frame += 1
            placed = []
        w, h = (int(v) for v in rng.integers(size_range[0], size_range[1] + 1, size=2))
        x, y = int(rng.integers(0, width - w + 1)), int(rng.integers(0, height - h + 1))
        box = BBox(x, y, x + w, y + h)
        if _overlaps(box, placed):
            continue
        placed.append(box)
        label = labels[int(rng.integers(len(labels)))]
        out.append(GroundTruthBox(frame, box, label, len(out)))
    return out


# -- bundled scenario ----------------------------------------------------------------

FIG3_ZONES = (
    (4, 0, 16, ZoneMeta(4, Surface.ROAD, (1.0, 0.0), no_stopping=True)),
    (1, 16, 44, ZoneMeta(1, Surface.ROAD, (1.0, 0.0))),
    (2, 44, 72, ZoneMeta(2, Surface.ROAD, (-1.0, 0.0))),
    (3, 72, 96, ZoneMeta(3, Surface.SIDEWALK, None, prohibited_classes=frozenset({"motorcycle"}))),
)


def fig3_scene(noise_sigma: float = 1.0, seed: int = 7) -> SceneSpec:
    """Four wrong-way passes, one sidewalk motorcycle and one illegal stop.

    The first 50 frames are empty road so a background model can settle.
    Correct-way cars and a pedestrian share the scene without triggering rules.
    """
    w, h = 160, 96
    raster = np.zeros((h, w), dtype=np.uint8)
    for zid, y0, y1, _ in FIG3_ZONES:
        paint_rect(raster, zid, 0, y0, w, y1)
    zmap = ZoneMap(raster, {m.zone_id: m for *_, m in FIG3_ZONES})
    seg = ActorSpec.from_segments
    actors = (
        seg("car", 20, 12, 50, (140, 31), [(30, -3, 0)], 101),           # wrong way, eastbound lane
        seg("car", 20, 12, 55, (136, 52), [(50, -2, 0)], 102),           # correct, westbound lane
        seg("car", 20, 12, 52, (4, 2), [(10, 2, 0), (70, 0, 0), (20, 2, 0)], 103),   # stops on shoulder
        seg("motorcycle", 10, 8, 60, (4, 80), [(40, 2, 0)], 104),        # rides the sidewalk
        seg("car", 20, 12, 90, (140, 31), [(25, -3, 0)], 105),           # wrong way
        seg("person", 6, 10, 110, (140, 76), [(90, -0.5, 0)], 106),      # walks on the sidewalk
        seg("car", 20, 12, 120, (4, 31), [(40, 2, 0)], 107),             # correct, eastbound lane
        seg("car", 20, 12, 130, (140, 17), [(30, -3, 0)], 108),          # wrong way, upper sub-lane
        seg("car", 20, 12, 170, (4, 52), [(30, 3, 0)], 109),             # wrong way, westbound lane
    )
    return SceneSpec(w, h, 220, fps=25.0, background="constant", background_value=60,
                     actors=actors, zones=zmap, noise_sigma=noise_sigma, seed=seed,
                     behavior=BehaviorParams(stop_frames=60))


def with_actors(spec: SceneSpec, actors: Sequence[ActorSpec]) -> SceneSpec:
    return replace(spec, actors=tuple(actors))
