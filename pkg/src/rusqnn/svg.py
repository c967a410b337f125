"""Self-contained SVG heatmaps, emitted as plain markup."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

# viridis anchor colors, interpolated linearly
_ANCHORS = np.array([
    (68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37),
], dtype=float)

NAN_COLOR = "#bbbbbb"


def color(value: float, vmin: float, vmax: float) -> str:
    if not math.isfinite(value):
        return NAN_COLOR
    t = 0.0 if vmax == vmin else (value - vmin) / (vmax - vmin)
    t = min(max(t, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(t), len(_ANCHORS) - 2)
    rgb = _ANCHORS[i] + (t - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def heatmap(values: np.ndarray, *, vmin: float, vmax: float, title: str = "",
            x_labels: Sequence[str] | None = None, y_labels: Sequence[str] | None = None,
            x_title: str = "", y_title: str = "", marker: tuple[int, int] | None = None,
            cell: float | None = None, label_every: int | None = None) -> str:
    """Render ``values`` (rows drawn bottom to top) with a fixed color range.

    ``marker`` is a ``(row, col)`` cell outlined in red, e.g. a grid minimum.
    """
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    cell = cell or max(4.0, min(24.0, 480.0 / max(rows, cols)))
    left, top, bottom, right = 110.0, 40.0, 90.0, 90.0
    w, h = cols * cell, rows * cell
    width, height = left + w + right, top + h + bottom
    every = label_every or max(1, math.ceil(max(rows, cols) / 12))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
           f'viewBox="0 0 {width:.0f} {height:.0f}" style="font-family:sans-serif;font-size:11px">',
           f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" style="fill:#ffffff"/>']
    if title:
        out.append(f'<text x="{left + w / 2:.1f}" y="22" style="text-anchor:middle;font-size:14px">'
                   f'{escape(title)}</text>')
    for r in range(rows):
        y = top + (rows - 1 - r) * cell
        for c in range(cols):
            out.append(f'<rect x="{left + c * cell:.2f}" y="{y:.2f}" width="{cell:.2f}" height="{cell:.2f}" '
                       f'style="fill:{color(values[r, c], vmin, vmax)}"/>')
    if marker is not None:
        r, c = marker
        out.append(f'<rect x="{left + c * cell:.2f}" y="{top + (rows - 1 - r) * cell:.2f}" '
                   f'width="{cell:.2f}" height="{cell:.2f}" style="fill:none;stroke:#ff0000;stroke-width:2"/>')
    for c in range(0, cols, every):
        if x_labels is None:
            break
        x = left + (c + 0.5) * cell
        out.append(f'<text x="{x:.1f}" y="{top + h + 12:.1f}" '
                   f'transform="rotate(60 {x:.1f} {top + h + 12:.1f})" style="text-anchor:start">'
                   f'{escape(str(x_labels[c]))}</text>')
    for r in range(0, rows, every):
        if y_labels is None:
            break
        y = top + (rows - 1 - r + 0.5) * cell + 4
        out.append(f'<text x="{left - 6:.1f}" y="{y:.1f}" style="text-anchor:end">'
                   f'{escape(str(y_labels[r]))}</text>')
    if x_title:
        out.append(f'<text x="{left + w / 2:.1f}" y="{height - 8:.1f}" style="text-anchor:middle">'
                   f'{escape(x_title)}</text>')
    if y_title:
        out.append(f'<text x="14" y="{top + h / 2:.1f}" transform="rotate(-90 14 {top + h / 2:.1f})" '
                   f'style="text-anchor:middle">{escape(y_title)}</text>')
    # color bar
    bx, steps = left + w + 20, 50
    for i in range(steps):
        v = vmin + (vmax - vmin) * (i + 0.5) / steps
        y = top + h - (i + 1) * h / steps
        out.append(f'<rect x="{bx:.1f}" y="{y:.2f}" width="14" height="{h / steps + 0.5:.2f}" '
                   f'style="fill:{color(v, vmin, vmax)}"/>')
    out.append(f'<text x="{bx + 18:.1f}" y="{top + h:.1f}">{_fmt(vmin)}</text>')
    out.append(f'<text x="{bx + 18:.1f}" y="{top + 8:.1f}">{_fmt(vmax)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
