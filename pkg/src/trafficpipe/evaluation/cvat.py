"""CVAT 1.1 video-export subset: ``<annotations><track><box/></track></annotations>``."""

from __future__ import annotations

import json
from collections import defaultdict
from typing import Iterable, Mapping
from xml.parsers import expat
from xml.sax.saxutils import quoteattr

from ..geometry import BBox, GroundTruthBox

BOX_REQUIRED = ("frame", "xtl", "ytl", "xbr", "ybr")


class CvatError(ValueError):
    pass


def parse_cvat(data: bytes | str) -> list[GroundTruthBox]:
    """Ground-truth boxes in document order; ``outside="1"`` boxes are skipped."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    parser = expat.ParserCreate()
    out: list[GroundTruthBox] = []
    state = {"root": None, "track": None}

    def fail(msg: str):
        raise CvatError(f"line {parser.CurrentLineNumber}: {msg}")

    def start(name, attrs):
        if state["root"] is None:
            if name != "annotations":
                fail(f"root element must be <annotations>, found <{name}>")
            state["root"] = name
            return
        if name == "track":
            for key in ("id", "label"):
                if key not in attrs:
                    fail(f"<track> missing attribute '{key}'")
            try:
                tid = int(attrs["id"])
            except ValueError:
                fail(f"<track> id {attrs['id']!r} is not an integer")
            state["track"] = (tid, attrs["label"])
        elif name == "box" and state["track"] is not None:
            for key in BOX_REQUIRED:
                if key not in attrs:
                    fail(f"<box> missing attribute '{key}'")
            if attrs.get("outside", "0") == "1":
                return
            try:
                frame = int(attrs["frame"])
                coords = [float(attrs[k]) for k in ("xtl", "ytl", "xbr", "ybr")]
                box = BBox(*coords)
            except ValueError as exc:
                fail(f"<box> has invalid attribute value: {exc}")
            tid, label = state["track"]
            try:
                out.append(GroundTruthBox(frame, box, label, tid))
            except ValueError as exc:
                fail(str(exc))

    def end(name):
        if name == "track":
            state["track"] = None

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise CvatError(f"malformed XML: {exc}") from None
    if state["root"] is None:
        raise CvatError("document has no <annotations> root")
    return out


def load_cvat(path) -> list[GroundTruthBox]:
    with open(path, "rb") as fh:
        try:
            return parse_cvat(fh.read())
        except CvatError as exc:
            raise CvatError(f"{path}: {exc}") from None


def _num(v: float) -> str:
    return repr(float(v))


def write_cvat(truths: Iterable[GroundTruthBox], frame_count: int | None = None) -> bytes:
    """Serialise boxes as CVAT tracks; with ``frame_count`` each track is closed
    by an ``outside="1"`` box the frame after its last appearance."""
    tracks: dict[int, list[GroundTruthBox]] = defaultdict(list)
    for t in truths:
        tracks[t.track_id].append(t)
    lines = ['<?xml version="1.0" encoding="utf-8"?>', "<annotations>", "  <version>1.1</version>"]
    for tid in sorted(tracks):
        boxes = sorted(tracks[tid], key=lambda b: b.frame_seq)
        labels = {b.class_label for b in boxes}
        if len(labels) != 1:
            raise CvatError(f"track {tid} mixes labels {sorted(labels)}")
        lines.append(f'  <track id="{tid}" label={quoteattr(boxes[0].class_label)} source="manual">')
        rows = [(b.frame_seq, b.bbox, "0") for b in boxes]
        last = boxes[-1]
        if frame_count is not None and last.frame_seq + 1 < frame_count:
            rows.append((last.frame_seq + 1, last.bbox, "1"))
        for frame, bb, outside in rows:
            lines.append(
                f'    <box frame="{frame}" outside="{outside}" occluded="0" keyframe="1" '
                f'xtl="{_num(bb.x_min)}" ytl="{_num(bb.y_min)}" xbr="{_num(bb.x_max)}" '
                f'ybr="{_num(bb.y_max)}" z_order="0"/>'
            )
        lines.append("  </track>")
    lines.append("</annotations>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_cvat(path, truths: Iterable[GroundTruthBox], frame_count: int | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(write_cvat(truths, frame_count))


def motion_document(truths: Iterable[GroundTruthBox]) -> dict:
    rows = [
        {"track_id": t.track_id, "frame_seq": t.frame_seq, "dx": t.true_motion[0], "dy": t.true_motion[1]}
        for t in sorted(truths, key=lambda b: (b.track_id, b.frame_seq))
        if t.true_motion is not None
    ]
    return {"motions": rows}


def save_motions(path, truths: Iterable[GroundTruthBox]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(motion_document(truths), fh, indent=1)
        fh.write("\n")


def load_motions(path) -> dict[tuple[int, int], tuple[float, float]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for i, row in enumerate(doc.get("motions", [])):
        try:
            out[(int(row["track_id"]), int(row["frame_seq"]))] = (float(row["dx"]), float(row["dy"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise CvatError(f"{path}: motion entry {i} invalid: {exc}") from None
    return out


def attach_motions(truths: Iterable[GroundTruthBox],
                   motions: Mapping[tuple[int, int], tuple[float, float]]) -> list[GroundTruthBox]:
    return [
        GroundTruthBox(t.frame_seq, t.bbox, t.class_label, t.track_id,
                       motions.get((t.track_id, t.frame_seq), t.true_motion))
        for t in truths
    ]
