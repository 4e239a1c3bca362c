"""Command line entry point: run, evaluate, synth, report.

A run is described by one JSON config file; flags only override its keys.
Relative paths inside a config resolve against the config file's directory.
Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import stages as _stages  # noqa: F401  registers built-in stage kinds
from .detect import DetectionFileError, load_detections
from .evaluation import (
    CvatError,
    EvalConfig,
    angle_error_stats,
    attach_motions,
    confusion_grid,
    eval_report,
    group_frames,
    load_cvat,
    load_motions,
    matched_ious,
    pr_curve,
)
from .geometry import MotionEstimate
from .pipeline import (
    STAGE_KINDS,
    PipelineConfigError,
    PipelineSpec,
    SinkFailure,
    StageFailure,
    StageSpec,
    build,
)
from .sink import LogSink, VideoSink, summarize, write_summary
from .synth import fig3_scene, generate, load_scene_spec, save_scene
from .videoio.pnm import PnmError, ppm_read
from .videoio.y4m import Y4mError, Y4mReader, read_header
from .zones import ZoneError

LOGGER = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_IO = 0, 2, 3, 4
OUTPUT_ENV = "TRAFFICPIPE_OUTPUT_DIR"
PATH_KEYS = ("path", "zones_raster", "zones_meta")
STAGE_KEYS = {"name", "kind", "params", "workers", "batch_size", "queue_capacity", "on_error"}
TOP_KEYS = {"input", "output_dir", "stages", "camera_id", "start_time", "annotated_video", "logs",
            "video", "sink_queue_capacity", "sequential"}


class ConfigError(Exception):
    def __init__(self, errors: Sequence[str]):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    input_path: Path
    input_format: str
    fps: float
    width: int
    height: int
    output_dir: Path
    stages: list[StageSpec]
    camera_id: str = "cam0"
    start_time: str | None = None
    annotated_video: bool = False
    logs: dict[str, str | None] = field(default_factory=dict)
    overlay: str | None = None
    sink_queue_capacity: int = 8
    sequential: bool = False


def _resolve(base: Path, value) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _positive_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _probe_input(path: Path, fmt: str, errors: list[str]) -> tuple[int, int, float] | None:
    if fmt == "y4m":
        if not path.is_file():
            errors.append(f"input: file not found: {path}")
            return None
        try:
            with open(path, "rb") as fh:
                hdr = read_header(fh)
        except (Y4mError, OSError) as exc:
            errors.append(f"input: {path}: {exc}")
            return None
        return hdr.width, hdr.height, hdr.fps
    if fmt == "ppm":
        if not path.is_dir():
            errors.append(f"input: directory not found: {path}")
            return None
        files = sorted(path.glob("*.ppm"))
        if not files:
            errors.append(f"input: no .ppm files in {path}")
            return None
        try:
            f = ppm_read(files[0])
        except (PnmError, OSError) as exc:
            errors.append(f"input: {files[0]}: {exc}")
            return None
        return f.width, f.height, 0.0
    errors.append(f"input: unknown format {fmt!r} (expected 'y4m' or 'ppm')")
    return None


def load_run_config(path, output_override: str | None = None, workers_override: int | None = None) -> RunConfig:
    """Parse and validate a run config, collecting every problem before failing."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON: {exc}"]) from None
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    base = path.parent
    errors: list[str] = []
    for k in sorted(set(doc) - TOP_KEYS):
        errors.append(f"unknown top-level key {k!r}")

    inp = doc.get("input")
    probe = None
    fmt, in_path, fps = "y4m", None, 25.0
    if not isinstance(inp, dict) or "path" not in inp:
        errors.append("input: expected an object with a 'path'")
    else:
        fmt = inp.get("format", "y4m")
        in_path = _resolve(base, inp["path"])
        probe = _probe_input(in_path, fmt, errors)
        if probe is not None:
            fps = float(inp.get("fps", probe[2] or 25.0))
            if fps <= 0:
                errors.append("input: fps must be positive")
    size = probe[:2] if probe else None

    output_dir = None
    if output_override:
        output_dir = Path(output_override)
    elif os.environ.get(OUTPUT_ENV):
        output_dir = Path(os.environ[OUTPUT_ENV])
    elif doc.get("output_dir"):
        output_dir = _resolve(base, doc["output_dir"])
    else:
        errors.append(f"output_dir: not set (config key, --output-dir or ${OUTPUT_ENV})")

    raw_stages = doc.get("stages", [])
    specs: list[StageSpec] = []
    if not isinstance(raw_stages, list):
        errors.append("stages: expected a list")
        raw_stages = []
    names: set[str] = set()
    for i, st in enumerate(raw_stages):
        where = f"stages[{i}]"
        if not isinstance(st, dict):
            errors.append(f"{where}: expected an object")
            continue
        for k in sorted(set(st) - STAGE_KEYS):
            errors.append(f"{where}: unknown key {k!r}")
        name = st.get("name")
        kind = st.get("kind")
        if not isinstance(name, str) or not name:
            errors.append(f"{where}: missing stage name")
            name = f"<stage {i}>"
        elif name in names:
            errors.append(f"{where}: duplicate stage name {name!r}")
        names.add(name)
        where = f"stage {name!r}"
        if kind not in STAGE_KINDS:
            errors.append(f"{where}: unknown stage kind {kind!r} (known: {', '.join(sorted(STAGE_KINDS))})")
        params = st.get("params", {})
        if not isinstance(params, dict):
            errors.append(f"{where}: params must be an object")
            params = {}
        params = dict(params)
        for key in PATH_KEYS:
            if key in params:
                params[key] = str(_resolve(base, params[key]))
                if not Path(params[key]).exists():
                    errors.append(f"{where}: {key} not found: {params[key]}")
        if kind in _stages.ZONE_KINDS and size is not None:
            params["frame_size"] = list(size)
        workers = st.get("workers", 1)
        if workers_override is not None and kind not in _stages.STATEFUL_KINDS:
            workers = workers_override
        bad = False
        for key, val in (("workers", workers), ("batch_size", st.get("batch_size", 1)),
                         ("queue_capacity", st.get("queue_capacity", 8))):
            if not _positive_int(val):
                errors.append(f"{where}: {key} must be an integer >= 1, got {val!r}")
                bad = True
        if kind in _stages.STATEFUL_KINDS and workers != 1:
            errors.append(f"{where}: {kind} stages keep state across frames and need workers = 1")
            bad = True
        on_error = st.get("on_error", "fail")
        if on_error not in ("fail", "skip"):
            errors.append(f"{where}: on_error must be 'fail' or 'skip'")
            bad = True
        if bad or kind not in STAGE_KINDS:
            continue
        files_ok = all(Path(params[k]).exists() for k in PATH_KEYS if k in params)
        task = None
        if files_ok and (size is not None or kind not in _stages.ZONE_KINDS):
            try:
                task = STAGE_KINDS[kind](params)
            except (PipelineConfigError, ZoneError, DetectionFileError, TypeError, ValueError, OSError) as exc:
                errors.append(f"{where}: {exc}")
                continue
        specs.append(StageSpec(name, kind, params, workers, st.get("batch_size", 1),
                               st.get("queue_capacity", 8), on_error, task))

    # upstream payload references
    seen: set[str] = set()
    for s in specs:
        if s.task is not None:
            for r in s.task.requires:
                if r not in seen:
                    errors.append(f"stage {s.name!r}: needs payload {r!r} from an earlier stage")
        seen.add(s.name)

    logs = doc.get("logs", {})
    if not isinstance(logs, dict):
        errors.append("logs: expected an object")
        logs = {}
    log_src = {k: logs.get(k, default) for k, default in
               (("detections", "detect"), ("motions", "flow"), ("behaviors", "behaviors"))}
    video = doc.get("video", {}) or {}
    overlay = video.get("overlay", "render" if "render" in names else None) if isinstance(video, dict) else None
    annotated = doc.get("annotated_video", False)
    if not isinstance(annotated, bool):
        errors.append("annotated_video: expected true or false")
    sink_cap = doc.get("sink_queue_capacity", 8)
    if not _positive_int(sink_cap):
        errors.append(f"sink_queue_capacity must be an integer >= 1, got {sink_cap!r}")
    start_time = doc.get("start_time")
    if start_time is not None:
        from datetime import datetime
        try:
            datetime.fromisoformat(start_time)
        except (TypeError, ValueError):
            errors.append(f"start_time: not an ISO-8601 timestamp: {start_time!r}")
    if errors:
        raise ConfigError(errors)
    return RunConfig(in_path, fmt, fps, size[0], size[1], output_dir, specs,
                     camera_id=str(doc.get("camera_id", "cam0")), start_time=start_time,
                     annotated_video=annotated, logs=log_src, overlay=overlay,
                     sink_queue_capacity=sink_cap, sequential=bool(doc.get("sequential", False)))


def _source(cfg: RunConfig):
    def frames():
        if cfg.input_format == "y4m":
            with open(cfg.input_path, "rb") as fh:
                yield from Y4mReader(fh)
        else:
            for i, p in enumerate(sorted(cfg.input_path.glob("*.ppm"))):
                yield ppm_read(p, seq=i, timestamp_ms=i * 1000.0 / cfg.fps)
    return frames


def _fps_ratio(fps: float) -> tuple[int, int]:
    from fractions import Fraction
    fr = Fraction(fps).limit_denominator(1001)
    return fr.numerator, fr.denominator


def execute_run(cfg: RunConfig, threaded: bool | None = None):
    names = {s.name for s in cfg.stages}
    logs = {k: (v if v in names else None) for k, v in cfg.logs.items()}
    sinks = [LogSink(cfg.output_dir, logs["detections"], logs["motions"], logs["behaviors"],
                     cfg.camera_id, cfg.fps, cfg.start_time)]
    if cfg.annotated_video:
        num, den = _fps_ratio(cfg.fps)
        overlay = cfg.overlay if cfg.overlay in names else None
        sinks.append(VideoSink(cfg.output_dir / "annotated.y4m", overlay, num, den))
    spec = PipelineSpec(cfg.stages, _source(cfg), sinks, cfg.sink_queue_capacity)
    p = build(spec)
    if threaded is None:
        threaded = not cfg.sequential
    return p.run(threaded=threaded)


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config, args.output_dir, args.workers)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.sequential:
        cfg.sequential = True
    try:
        stats = execute_run(cfg)
    except PipelineConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageFailure as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        if exc.stats is not None:
            print(exc.stats.summary(), file=sys.stderr)
        return EXIT_STAGE
    except (SinkFailure, OSError, Y4mError, PnmError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(stats.summary())
    print(f"logs written to {cfg.output_dir}")
    return EXIT_OK


def load_eval_config(path) -> EvalConfig:
    if path is None:
        return EvalConfig()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    allowed = {"iou_threshold", "objectness_grid", "label_grid", "confidence_grid", "class_mapping",
               "class_aware", "min_speed_px"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ValueError(f"unknown evaluation key(s) {unknown}")
    for k in ("objectness_grid", "label_grid", "confidence_grid"):
        if k in doc:
            doc[k] = tuple(doc[k])
    return EvalConfig(**doc)


def load_pred_motions(path) -> dict[int, dict[int, MotionEstimate]]:
    out: dict[int, dict[int, MotionEstimate]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                m = MotionEstimate.from_vector(rec["dx"], rec["dy"], int(rec.get("support", 0)))
                out.setdefault(int(rec["frame_seq"]), {})[int(rec["det_index"])] = m
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad motion record: {exc}") from None
    return out


def evaluate(det_path, truth_path, out_dir, cfg: EvalConfig, truth_motions=None, pred_motions=None,
             start_seq: int = 0) -> dict[str, Any]:
    dets = {s: d for s, d in load_detections(det_path).items() if s >= start_seq}
    truths = [t for t in load_cvat(truth_path) if t.frame_seq >= start_seq]
    if truth_motions is not None:
        truths = attach_motions(truths, load_motions(truth_motions))
    frames = group_frames(dets, truths)
    labels = sorted({cfg.true_label(t) for t in truths} | {d.class_label for v in dets.values() for d in v})
    curves = {label: pr_curve(frames, label, cfg) for label in labels}
    matrices = confusion_grid(frames, cfg)
    angle = None
    if pred_motions is not None:
        pm = load_pred_motions(pred_motions)
        aligned = {s: [pm.get(s, {}).get(i) for i in range(len(dets.get(s, ())))] for s in frames}
        angle = angle_error_stats(frames, aligned, cfg)
    ious = matched_ious(frames, cfg)
    extra = {
        "frames": len(frames),
        "detections": sum(len(v) for v in dets.values()),
        "truths": len(truths),
        "matched_pairs": len(ious),
        "median_iou": f"{statistics.median(ious):.6f}" if ious else "n/a",
        "first_frame": start_seq,
    }
    written = eval_report(out_dir, curves, matrices, angle, extra)
    return {"curves": curves, "matrices": matrices, "angle": angle, "ious": ious, "written": written}


def cmd_evaluate(args) -> int:
    out = args.output_dir or os.environ.get(OUTPUT_ENV) or "eval_report"
    try:
        cfg = load_eval_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = evaluate(args.detections, args.truth, out, cfg, args.truth_motions, args.pred_motions,
                       args.start_frame)
    except (DetectionFileError, CvatError, ValueError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print((Path(out) / "summary.txt").read_text(encoding="utf-8"), end="")
    print(f"report written to {out} ({len(res['written'])} files)")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = args.output_dir or os.environ.get(OUTPUT_ENV)
    if not out:
        print("config error: no output directory given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = fig3_scene() if args.spec == "fig3" else load_scene_spec(args.spec)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: scene spec {args.spec}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    scene = generate(spec)
    try:
        paths = save_scene(scene, out)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{len(scene.frames)} frames, {len(scene.truths)} truth boxes, "
          f"{len(scene.expected_events)} expected events")
    for k in sorted(paths):
        print(f"  {k}: {paths[k]}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = args.output_dir or os.environ.get(OUTPUT_ENV) or args.log_dir
    try:
        summary = summarize(args.log_dir, args.bucket, args.fps)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    paths = write_summary(summary, out)
    for name, n in sorted(summary.malformed.items()):
        print(f"warning: skipped {n} malformed line(s) in {name}", file=sys.stderr)
    print(f"{len(summary.counts)} count rows, {len(summary.events)} event rows")
    for k in sorted(paths):
        print(f"  {k}: {paths[k]}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trafficpipe", description="Streaming traffic video analytics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a pipeline described by a JSON config")
    r.add_argument("config")
    r.add_argument("--output-dir")
    r.add_argument("--workers", type=int, help="worker count for every stateless stage")
    r.add_argument("--sequential", action="store_true", help="single-threaded deterministic execution")
    r.set_defaults(fn=cmd_run)

    e = sub.add_parser("evaluate", help="score detections against CVAT ground truth")
    e.add_argument("detections")
    e.add_argument("truth")
    e.add_argument("--config", help="evaluation settings (JSON)")
    e.add_argument("--truth-motions", help="ground-truth motion JSON")
    e.add_argument("--pred-motions", help="motions.jsonl from a run")
    e.add_argument("--start-frame", type=int, default=0, help="ignore frames before this one")
    e.add_argument("--output-dir")
    e.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("synth", help="generate a synthetic scene fixture")
    s.add_argument("spec", help="scene spec JSON, or 'fig3' for the bundled scenario")
    s.add_argument("--output-dir")
    s.set_defaults(fn=cmd_synth)

    p = sub.add_parser("report", help="summarise run logs into per-bucket counts")
    p.add_argument("log_dir")
    p.add_argument("--bucket", type=float, default=60.0, help="bucket size in seconds")
    p.add_argument("--fps", type=float)
    p.add_argument("--output-dir")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
