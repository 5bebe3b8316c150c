"""Minimal native SVG renderers for the report plots.

Plots are advisory companions to the CSV outputs: histograms of
per-entry biases, line panels of scaled errors and coverage, and
significance heatmaps. No plotting dependency is required; the files
are plain hand-assembled SVG.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["histogram_svg", "line_panel_svg", "heatmap_svg"]

_FONT = 'font-family="Helvetica,Arial,sans-serif"'


def _svg_header(width, height):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )


def histogram_svg(values, title: str = "", bins: int = 30, width: int = 420, height: int = 280) -> str:
    """Histogram of a 1-d sample with a zero reference line."""
    values = np.asarray(values, dtype=float).ravel()
    counts, edges = np.histogram(values, bins=bins)
    left, right, top, bottom = 50, 15, 30, 35
    pw, ph = width - left - right, height - top - bottom
    cmax = max(counts.max(), 1)
    lo, hi = edges[0], edges[-1]
    span = hi - lo if hi > lo else 1.0

    parts = [_svg_header(width, height)]
    parts.append(f'<text x="{width/2}" y="18" text-anchor="middle" {_FONT} font-size="13">{escape(title)}</text>')
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        x = left + (e0 - lo) / span * pw
        w = max((e1 - e0) / span * pw - 0.5, 0.5)
        h = c / cmax * ph
        parts.append(
            f'<rect x="{x:.2f}" y="{top + ph - h:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="#4878a8" stroke="none"/>'
        )
    if lo < 0 < hi:
        xz = left + (0 - lo) / span * pw
        parts.append(
            f'<line x1="{xz:.2f}" y1="{top}" x2="{xz:.2f}" y2="{top+ph}" stroke="#c04040" '
            f'stroke-dasharray="4,3"/>'
        )
    parts.append(f'<line x1="{left}" y1="{top+ph}" x2="{left+pw}" y2="{top+ph}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = lo + frac * span
        x = left + frac * pw
        parts.append(
            f'<text x="{x:.1f}" y="{top+ph+16}" text-anchor="middle" {_FONT} font-size="10">{xv:.3g}</text>'
        )
    parts.append("</svg>\n")
    return "".join(parts)


def line_panel_svg(
    series: dict, title: str = "", ylabel: str = "", width: int = 480, height: int = 300,
    y_min: float | None = None, y_max: float | None = None,
) -> str:
    """Line panel: ``series`` maps a label to a list of (x, y) pairs."""
    left, right, top, bottom = 60, 15, 30, 40
    pw, ph = width - left - right, height - top - bottom
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo = min(ys) if y_min is None else y_min
    y_hi = max(ys) if y_max is None else y_max
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    palette = ["#4878a8", "#c04040", "#50a060", "#9060b0", "#c08030", "#607080"]

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return top + ph - (y - y_lo) / (y_hi - y_lo) * ph

    parts = [_svg_header(width, height)]
    parts.append(f'<text x="{width/2}" y="18" text-anchor="middle" {_FONT} font-size="13">{escape(title)}</text>')
    parts.append(f'<line x1="{left}" y1="{top+ph}" x2="{left+pw}" y2="{top+ph}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top+ph}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{left-6}" y="{py(yv)+4:.1f}" text-anchor="end" {_FONT} font-size="10">{yv:.3g}</text>'
        )
        xv = x_lo + frac * (x_hi - x_lo)
        parts.append(
            f'<text x="{px(xv):.1f}" y="{top+ph+16}" text-anchor="middle" {_FONT} font-size="10">{xv:.3g}</text>'
        )
    parts.append(
        f'<text x="14" y="{top+ph/2}" transform="rotate(-90 14 {top+ph/2})" text-anchor="middle" '
        f'{_FONT} font-size="11">{escape(ylabel)}</text>'
    )
    for i, (label, pts) in enumerate(series.items()):
        color = palette[i % len(palette)]
        pts = sorted(pts)
        path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{color}"/>')
        parts.append(
            f'<text x="{left+pw-4}" y="{top+14+14*i}" text-anchor="end" {_FONT} font-size="11" '
            f'fill="{color}">{escape(str(label))}</text>'
        )
    parts.append("</svg>\n")
    return "".join(parts)


def heatmap_svg(
    matrix, title: str = "", width: int | None = None, height: int | None = None, signed: bool = True
) -> str:
    """Heatmap of a matrix, red for positive, blue for negative.

    With ``signed`` the color scale is symmetric around zero; zeros render
    white, which makes significance maps (entries in {-1, 0, +1}) read
    directly.
    """
    M = np.asarray(matrix, dtype=float)
    rows, cols = M.shape
    cell = max(min(600 // max(cols, 1), 18), 2)
    width = width or cols * cell + 70
    height = height or rows * cell + 50
    vmax = np.abs(M).max() if signed else M.max()
    vmax = vmax if vmax > 0 else 1.0

    parts = [_svg_header(width, height)]
    parts.append(f'<text x="{width/2}" y="16" text-anchor="middle" {_FONT} font-size="13">{escape(title)}</text>')
    for i in range(rows):
        for j in range(cols):
            v = M[i, j] / vmax
            if signed:
                if v >= 0:
                    col = f"rgb({255},{int(255*(1-v))},{int(255*(1-v))})"
                else:
                    col = f"rgb({int(255*(1+v))},{int(255*(1+v))},{255})"
            else:
                g = int(255 * (1 - max(min(v, 1.0), 0.0)))
                col = f"rgb({g},{g},{g})"
            parts.append(
                f'<rect x="{50+j*cell}" y="{26+i*cell}" width="{cell}" height="{cell}" fill="{col}"/>'
            )
    parts.append(
        f'<rect x="50" y="26" width="{cols*cell}" height="{rows*cell}" fill="none" stroke="black" stroke-width="0.5"/>'
    )
    parts.append("</svg>\n")
    return "".join(parts)
