"""Deterministic SVG small-multiple rendering and the JSON manifest.

Rendering is a pure function of (layout, embedding, style): identical
inputs produce byte-identical documents. All floats are written with
fixed formatting and every iteration order is pinned.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from embexplain.density import Polygon, polygon_area, ring_centroid
from embexplain.panels import Layout, Panel
from embexplain.regions import RegionAnnotation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Style:
    """Visual conventions for panels; the color cycle repeats deterministically."""

    panel_size: int = 320
    header_height: int = 22
    margin: int = 10
    point_radius: float = 1.8
    background_point_color: str = "#b8b8b8"
    colors: tuple[str, ...] = (
        "#4c78a8",
        "#f58518",
        "#54a24b",
        "#e45756",
        "#72b7b2",
        "#eeca3b",
        "#b279a2",
        "#ff9da6",
        "#9d755d",
        "#bab0ac",
    )
    contour_width: float = 1.6
    contour_alpha: float = 0.9
    fill_alpha: float = 0.14
    label_font_size: int = 11
    title_font_size: int = 13
    font_family: str = "Helvetica, Arial, sans-serif"
    columns: int = 2

    def color(self, index: int) -> str:
        return self.colors[index % len(self.colors)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Transform:
    """Data coordinates to screen pixels, uniform scale, y flipped."""

    def __init__(self, coords: np.ndarray, size: int, top: int, margin: int) -> None:
        x0, x1 = float(coords[:, 0].min()), float(coords[:, 0].max())
        y0, y1 = float(coords[:, 1].min()), float(coords[:, 1].max())
        span = max(x1 - x0, y1 - y0, 1e-12) * 1.08
        inner = size - 2 * margin
        self.scale = inner / span
        self.cx = (x0 + x1) / 2.0
        self.cy = (y0 + y1) / 2.0
        self.mid = margin + inner / 2.0
        self.top = top

    def apply(self, pts: np.ndarray) -> np.ndarray:
        out = np.empty_like(pts, dtype=float)
        out[:, 0] = self.mid + (pts[:, 0] - self.cx) * self.scale
        out[:, 1] = self.top + self.mid - (pts[:, 1] - self.cy) * self.scale
        return out

    def apply_one(self, x: float, y: float) -> tuple[float, float]:
        p = self.apply(np.array([[x, y]], dtype=float))
        return float(p[0, 0]), float(p[0, 1])


def _polygon_path(poly: Polygon, tf: _Transform) -> Optional[str]:
    parts = []
    for ring in (poly.exterior, *poly.holes):
        if len(ring) < 3:
            log.warning("skipping degenerate polygon ring with %d vertices", len(ring))
            continue
        pts = tf.apply(ring)
        coords = " L ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in pts)
        parts.append(f"M {coords} Z")
    return " ".join(parts) if parts else None


def _annotation_anchor(a: RegionAnnotation) -> tuple[float, float]:
    """Label anchor: centroid of the largest polygon."""
    best = max(a.shape.polygons, key=polygon_area)
    return ring_centroid(best.exterior)


def _label_lines(a: RegionAnnotation) -> list[str]:
    lines = [a.rule.label()]
    lines.extend(f"also: {r.label()}" for r in a.background)
    return lines


def _render_panel_body(
    panel: Panel,
    coords: np.ndarray,
    style: Style,
    title: str,
) -> list[str]:
    """SVG fragment (list of elements) for one panel, origin at (0, 0)."""
    size = style.panel_size
    tf = _Transform(coords, size, style.header_height, style.margin)
    out: list[str] = []
    out.append(
        f'<rect x="0" y="0" width="{size}" height="{size + style.header_height}" '
        f'fill="#ffffff" stroke="#d0d0d0" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{_fmt(size / 2)}" y="{style.header_height - 7}" '
        f'font-family="{style.font_family}" font-size="{style.title_font_size}" '
        f'text-anchor="middle" fill="#333333">{escape(title)}</text>'
    )

    # Region fills under everything else.
    for ai, a in enumerate(panel.annotations):
        color = style.color(ai)
        for poly in a.shape.polygons:
            path = _polygon_path(poly, tf)
            if path:
                out.append(
                    f'<path d="{path}" fill="{color}" fill-opacity="{style.fill_alpha}" '
                    f'fill-rule="evenodd" stroke="none"/>'
                )

    # All N points: first containing annotation wins the color.
    assignment = np.full(len(coords), -1, dtype=int)
    for ai, a in enumerate(panel.annotations):
        assignment[(assignment == -1) & a.members] = ai
    screen = tf.apply(coords)
    for i in range(len(coords)):
        color = (
            style.background_point_color
            if assignment[i] < 0
            else style.color(int(assignment[i]))
        )
        out.append(
            f'<circle cx="{_fmt(screen[i, 0])}" cy="{_fmt(screen[i, 1])}" '
            f'r="{style.point_radius}" fill="{color}"/>'
        )

    # Contour outlines above the points.
    for ai, a in enumerate(panel.annotations):
        color = style.color(ai)
        for poly in a.shape.polygons:
            path = _polygon_path(poly, tf)
            if path:
                out.append(
                    f'<path d="{path}" fill="none" stroke="{color}" '
                    f'stroke-width="{style.contour_width}" '
                    f'stroke-opacity="{style.contour_alpha}"/>'
                )

    out.extend(_place_labels(panel, style, tf))
    return out


def _place_labels(panel: Panel, style: Style, tf: _Transform) -> list[str]:
    """Rule labels at region centroids with greedy vertical nudging; labels
    that cannot fit move to a numbered side list under the plot."""
    fs = style.label_font_size
    line_h = int(fs * 1.25)
    size = style.panel_size
    plot_bottom = style.header_height + size - style.margin
    placed: list[tuple[float, float, float, float]] = []
    out: list[str] = []
    overflow: list[tuple[int, list[str]]] = []

    for ai, a in enumerate(panel.annotations):
        lines = _label_lines(a)
        width = 0.62 * fs * max(len(line) for line in lines)
        height = line_h * len(lines)
        cx, cy = _annotation_anchor(a)
        sx, sy = tf.apply_one(cx, cy)
        sy -= height / 2.0
        ok = False
        for _ in range(60):
            box = (sx - width / 2.0, sy, width, height)
            if sy + height > plot_bottom:
                break
            if not any(_boxes_overlap(box, other) for other in placed):
                ok = True
                break
            sy += 4.0
        if not ok:
            overflow.append((ai, lines))
            continue
        placed.append((sx - width / 2.0, sy, width, height))
        color = style.color(ai)
        for li, line in enumerate(lines):
            out.append(
                f'<text x="{_fmt(sx)}" y="{_fmt(sy + (li + 1) * line_h - 3)}" '
                f'font-family="{style.font_family}" font-size="{fs}" '
                f'text-anchor="middle" fill="{color}" stroke="#ffffff" '
                f'stroke-width="3" paint-order="stroke">{escape(line)}</text>'
            )

    for oi, (ai, lines) in enumerate(overflow):
        color = style.color(ai)
        cx, cy = _annotation_anchor(panel.annotations[ai])
        sx, sy = tf.apply_one(cx, cy)
        marker = f"({oi + 1})"
        out.append(
            f'<text x="{_fmt(sx)}" y="{_fmt(sy)}" font-family="{style.font_family}" '
            f'font-size="{fs}" text-anchor="middle" fill="{color}" stroke="#ffffff" '
            f'stroke-width="3" paint-order="stroke">{escape(marker)}</text>'
        )
        ly = plot_bottom + (oi + 1) * line_h
        text = f"{marker} " + "; ".join(lines)
        out.append(
            f'<text x="{style.margin}" y="{_fmt(ly)}" font-family="{style.font_family}" '
            f'font-size="{fs}" text-anchor="start" fill="{color}">{escape(text)}</text>'
        )
    return out


def _boxes_overlap(a: tuple, b: tuple) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _panel_title(panel: Panel, index: int) -> str:
    return f"{panel.kind} {index}: {panel.label}"


def _svg_document(width: int, height: int, body: list[str]) -> str:
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        *body,
        "</svg>",
        "",
    ]
    return "\n".join(lines)


def render_panel_svg(panel: Panel, coords: np.ndarray, style: Style, index: int = 1) -> str:
    """One self-contained SVG document for a single panel."""
    coords = np.asarray(coords, dtype=float)
    body = _render_panel_body(panel, coords, style, _panel_title(panel, index))
    height = style.panel_size + style.header_height + _overflow_space(panel, style)
    return _svg_document(style.panel_size, height, body)


def _overflow_space(panel: Panel, style: Style) -> int:
    # Worst case every label overflows; reserving the space keeps documents
    # a pure function of the panel rather than of layout decisions.
    return int(style.label_font_size * 1.25) * len(panel.annotations) + 4


def render_layout_svg(
    layout: Layout, coords: np.ndarray, style: Optional[Style] = None
) -> dict[str, str]:
    """Render a layout to named SVG documents: one per panel plus an index
    sheet arranging all panels as small multiples."""
    if not layout.panels:
        raise ValueError("nothing to render: layout has no panels")
    style = style or Style()
    coords = np.asarray(coords, dtype=float)
    docs: dict[str, str] = {}
    for i, panel in enumerate(layout.panels, start=1):
        docs[f"{layout.kind}_panel_{i:02d}.svg"] = render_panel_svg(
            panel, coords, style, index=i
        )

    cols = min(style.columns, len(layout.panels))
    rows = (len(layout.panels) + cols - 1) // cols
    cell_w = style.panel_size + 12
    cell_h = style.panel_size + style.header_height + 12
    body: list[str] = []
    for i, panel in enumerate(layout.panels):
        ox = (i % cols) * cell_w + 6
        oy = (i // cols) * cell_h + 6
        inner = _render_panel_body(panel, coords, style, _panel_title(panel, i + 1))
        body.append(f'<g transform="translate({ox},{oy})">')
        body.extend(inner)
        body.append("</g>")
    docs[f"{layout.kind}_index.svg"] = _svg_document(cols * cell_w, rows * cell_h, body)
    return docs


# ---------------------------------------------------------------------------
# Manifest


def _round4(v: float) -> float:
    return round(float(v), 4)


def _annotation_entry(a: RegionAnnotation) -> dict:
    representative = not np.array_equal(a.shape.member_mask, a.members)
    return {
        "key": a.key,
        "rule": a.rule.label(),
        "features": list(a.rule.features),
        "member_count": a.member_count,
        "purity": round(a.purity, 6),
        "background_rules": [r.label() for r in a.background],
        "provenance": list(a.provenance),
        "representative_shape": representative,
        "polygons": [
            {
                "exterior": [[_round4(x), _round4(y)] for x, y in poly.exterior],
                "holes": [
                    [[_round4(x), _round4(y)] for x, y in hole] for hole in poly.holes
                ],
            }
            for poly in a.shape.polygons
        ],
    }


def _panel_entry(panel: Panel, index: int) -> dict:
    return {
        "rank": index,
        "label": panel.label,
        "features": list(panel.features),
        "scores": {k: round(v, 6) for k, v in sorted(panel.scores.items())},
        "criterion_ranks": {k: round(v, 6) for k, v in sorted(panel.ranks.items())},
        "aggregate_rank": round(panel.aggregate_rank, 6)
        if panel.aggregate_rank is not None
        else None,
        "annotations": [_annotation_entry(a) for a in panel.annotations],
    }


def render_manifest_json(layouts: dict[str, Layout], provenance: dict) -> str:
    """Machine-readable manifest with stable key order and 4-decimal
    polygon coordinates."""
    manifest = {
        "dataset": provenance.get("dataset", {}),
        "parameters": provenance.get("parameters", {}),
        "sigma": provenance.get("sigma"),
        "contrastive": [
            _panel_entry(p, i + 1)
            for i, p in enumerate(layouts["contrastive"].panels)
        ]
        if "contrastive" in layouts
        else [],
        "descriptive": [
            _panel_entry(p, i + 1)
            for i, p in enumerate(layouts["descriptive"].panels)
        ]
        if "descriptive" in layouts
        else [],
    }
    return json.dumps(manifest, indent=2, ensure_ascii=False) + "\n"
