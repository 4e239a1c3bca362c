"""Byte-deterministic evaluation report: CSV tables, an SVG PR plot and a summary."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .metrics import AngleStats, ConfusionMatrix, PRPoint

SVG_SIZE = 360
SVG_MARGIN = 40
_PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def pr_csv(points: Sequence[PRPoint]) -> str:
    return _csv_text(["threshold", "precision", "recall", "tp", "fp", "fn"],
                     [[_f(p.threshold), _f(p.precision), _f(p.recall), p.tp, p.fp, p.fn] for p in points])


def confusion_csv(cm: ConfusionMatrix, raw: bool = False) -> str:
    values = cm.counts if raw else cm.proportions
    rows = [[label] + [str(int(v)) if raw else _f(float(v)) for v in values[i]]
            for i, label in enumerate(cm.row_labels)]
    return _csv_text(["predicted \\ true"] + list(cm.col_labels), rows)


def pr_svg(curves: Mapping[str, Sequence[PRPoint]]) -> str:
    """Recall on x, precision on y; one circle marker per PR point."""
    s, m = SVG_SIZE, SVG_MARGIN
    span = s - 2 * m

    def px(r: float) -> str:
        return f"{m + r * span:.2f}"

    def py(p: float) -> str:
        return f"{s - m - p * span:.2f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">',
        f'<rect x="0" y="0" width="{s}" height="{s}" fill="white"/>',
        f'<line x1="{m}" y1="{s - m}" x2="{s - m}" y2="{s - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{s - m}" stroke="black"/>',
        f'<text x="{s / 2:.0f}" y="{s - 8}" text-anchor="middle" font-size="12">recall</text>',
        f'<text x="12" y="{s / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {s / 2:.0f})">precision</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        out.append(f'<text x="{px(tick)}" y="{s - m + 14}" text-anchor="middle" font-size="10">{tick:.1f}</text>')
        out.append(f'<text x="{m - 6}" y="{py(tick)}" text-anchor="end" font-size="10">{tick:.1f}</text>')
    for k, label in enumerate(sorted(curves)):
        color = _PALETTE[k % len(_PALETTE)]
        pts = curves[label]
        if len(pts) > 1:
            coords = " ".join(f"{px(p.recall)},{py(p.precision)}" for p in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}"/>')
        for p in pts:
            out.append(f'<circle cx="{px(p.recall)}" cy="{py(p.precision)}" r="3" fill="{color}">'
                       f'<title>{escape(label)} t={p.threshold:.3f}</title></circle>')
        out.append(f'<text x="{s - m}" y="{m + 14 * k}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label) or "_"


def confusion_filename(objectness_t: float, label_t: float) -> str:
    return f"confusion_obj{objectness_t:.3f}_lbl{label_t:.3f}.csv"


def eval_report(out_dir, curves: Mapping[str, Sequence[PRPoint]],
                matrices: Mapping[tuple[float, float], ConfusionMatrix],
                angle: AngleStats | None = None, extra: Mapping[str, object] | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)

    for label in sorted(curves):
        put(f"pr_{_slug(label)}.csv", pr_csv(curves[label]))
    put("pr.svg", pr_svg(curves))
    for (to, tl) in sorted(matrices):
        put(confusion_filename(to, tl), confusion_csv(matrices[(to, tl)]))
        put(f"counts/{confusion_filename(to, tl)}", confusion_csv(matrices[(to, tl)], raw=True))

    lines = ["evaluation summary", ""]
    for label in sorted(curves):
        lines.append(f"class {label}:")
        for p in curves[label]:
            lines.append(f"  t={p.threshold:.3f} precision={p.precision:.4f} recall={p.recall:.4f} "
                         f"tp={p.tp} fp={p.fp} fn={p.fn}")
    lines.append(f"confusion matrices: {len(matrices)}")
    if angle is not None:
        mean = "n/a" if angle.mean_deg is None else f"{angle.mean_deg:.3f}"
        median = "n/a" if angle.median_deg is None else f"{angle.median_deg:.3f}"
        lines.append(f"motion angle error: mean={mean} deg median={median} deg "
                     f"pairs={angle.count} excluded={angle.excluded}")
        put("angle_error.csv", _csv_text(["mean_deg", "median_deg", "pairs", "excluded"],
                                         [[_f(angle.mean_deg), _f(angle.median_deg), angle.count, angle.excluded]]))
    for k in sorted(extra or {}):
        lines.append(f"{k}: {extra[k]}")
    put("summary.txt", "\n".join(lines) + "\n")
    return written
