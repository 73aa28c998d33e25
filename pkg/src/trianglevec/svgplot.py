"""Minimal deterministic SVG charts (no plotting dependency)."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

GOOD_COLOR = "#2b8cbe"
BAD_COLOR = "#e34a33"
BAR_COLOR = "#636363"


def _n(v: float) -> str:
    s = f"{float(v):.2f}"
    return "0.00" if s == "-0.00" else s


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="start", size=None, extra=""):
    fs = f' font-size="{size}"' if size else ""
    return f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}"{fs}{extra}>{escape(str(s))}</text>'


def bar_chart(names, values, title: str = "", width: int = 480) -> str:
    """Horizontal bars, one per name, in the given order."""
    values = [float(v) for v in values]
    row, left, top = 20, 130, 30 if title else 10
    height = top + row * len(values) + 20
    vmax = max([abs(v) for v in values] + [0.0])
    scale = (width - left - 60) / vmax if vmax > 0 else 0.0
    body = [_text(width / 2, 18, title, "middle", 13)] if title else []
    for i, (name, v) in enumerate(zip(names, values)):
        y = top + i * row
        w = abs(v) * scale
        color = BAR_COLOR if v >= 0 else BAD_COLOR
        body.append(f'<rect x="{left}" y="{_n(y + 3)}" width="{_n(w)}" height="{row - 6}" fill="{color}"/>')
        body.append(_text(left - 6, y + row - 7, name, "end"))
        body.append(_text(left + w + 4, y + row - 7, f"{v:.4g}"))
    return _doc(width, height, body)


def signed_bar_chart(names, values, title: str = "", width: int = 480) -> str:
    """Bars extending left (negative) or right (positive) of a centre line."""
    values = [float(v) for v in values]
    row, left, top = 20, 130, 30 if title else 10
    height = top + row * len(values) + 20
    mid = left + (width - left - 20) / 2
    vmax = max([abs(v) for v in values] + [0.0])
    scale = (width - left - 20) / 2 / vmax if vmax > 0 else 0.0
    body = [_text(width / 2, 18, title, "middle", 13)] if title else []
    body.append(f'<line x1="{_n(mid)}" y1="{top}" x2="{_n(mid)}" y2="{top + row * len(values)}" stroke="black"/>')
    for i, (name, v) in enumerate(zip(names, values)):
        y = top + i * row
        w = abs(v) * scale
        x = mid if v >= 0 else mid - w
        color = GOOD_COLOR if v > 0 else BAD_COLOR
        body.append(f'<rect x="{_n(x)}" y="{_n(y + 3)}" width="{_n(w)}" height="{row - 6}" fill="{color}"/>')
        body.append(_text(left - 6, y + row - 7, name, "end"))
    return _doc(width, height, body)


def curve_plot(values, scores, counts_good, counts_bad, title: str = "", width: int = 480, height: int = 320) -> str:
    """Step curve of per-bin scores above a stacked class histogram."""
    values = np.asarray(values, dtype=float)
    scores = np.asarray(scores, dtype=float)
    cg = np.asarray(counts_good, dtype=float)
    cb = np.asarray(counts_bad, dtype=float)
    left, right, top = 50, 15, 30
    curve_h, hist_h, gap = 170, 70, 25
    x0, x1 = float(values.min()), float(values.max())
    span = x1 - x0 if x1 > x0 else 1.0
    pw = width - left - right

    def px(v):
        return left + (v - x0) / span * pw if x1 > x0 else left + pw / 2

    smin, smax = float(min(scores.min(), 0.0)), float(max(scores.max(), 0.0))
    srange = smax - smin if smax > smin else 1.0

    def py(s):
        return top + (smax - s) / srange * curve_h

    body = [_text(width / 2, 18, title, "middle", 13)] if title else []
    body.append(f'<line x1="{left}" y1="{_n(py(0.0))}" x2="{width - right}" y2="{_n(py(0.0))}" stroke="#bbbbbb"/>')
    pts = " ".join(f"{_n(px(v))},{_n(py(s))}" for v, s in zip(values, scores))
    body.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    for v, s in zip(values, scores):
        body.append(f'<circle cx="{_n(px(v))}" cy="{_n(py(s))}" r="1.5"/>')
    body.append(_text(left - 4, top + 4, f"{smax:.3g}", "end"))
    body.append(_text(left - 4, top + curve_h, f"{smin:.3g}", "end"))
    base = top + curve_h + gap + hist_h
    cmax = float(max((cg + cb).max(), 1.0))
    bw = max(pw / max(len(values), 1) * 0.8, 1.0)
    for v, g, b in zip(values, cg, cb):
        hb = b / cmax * hist_h
        hg = g / cmax * hist_h
        x = px(v) - bw / 2
        body.append(f'<rect x="{_n(x)}" y="{_n(base - hb)}" width="{_n(bw)}" height="{_n(hb)}" fill="{BAD_COLOR}"/>')
        body.append(f'<rect x="{_n(x)}" y="{_n(base - hb - hg)}" width="{_n(bw)}" height="{_n(hg)}" fill="{GOOD_COLOR}"/>')
    body.append(f'<line x1="{left}" y1="{base}" x2="{width - right}" y2="{base}" stroke="black"/>')
    body.append(_text(left, base + 14, f"{x0:.4g}"))
    body.append(_text(width - right, base + 14, f"{x1:.4g}", "end"))
    return _doc(width, height, body)


def image_overlay(values: np.ndarray, lines, title: str = "", cell: int = 5) -> str:
    """Grayscale pixel grid with overlay line segments ``(x0, y0, x1, y1, color, label)``.

    Coordinates are in pixel units with the origin at the top-left pixel centre.
    """
    v = np.asarray(values, dtype=float)
    h, w = v.shape
    lo, hi = float(v.min()), float(v.max())
    g = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    top = 24 if title else 4
    width, height = w * cell + 8, h * cell + top + 4
    body = [_text(width / 2, 16, title, "middle", 12)] if title else []
    for i in range(h):
        for j in range(w):
            level = int(round(255 * g[i, j]))
            body.append(
                f'<rect x="{4 + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                f'fill="rgb({level},{level},{level})"/>'
            )
    for x0, y0, x1, y1, color, label in lines:
        c = [4 + (x0 + 0.5) * cell, top + (y0 + 0.5) * cell, 4 + (x1 + 0.5) * cell, top + (y1 + 0.5) * cell]
        body.append(
            f'<line x1="{_n(c[0])}" y1="{_n(c[1])}" x2="{_n(c[2])}" y2="{_n(c[3])}" stroke="{color}" stroke-width="2"/>'
        )
        body.append(_text(c[2], c[3], label, "end", 10, f' fill="{color}"'))
    return _doc(width, height, body)
