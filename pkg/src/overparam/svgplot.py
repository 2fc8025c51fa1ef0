"""Minimal SVG line plots: axes, ticks, one polyline per series, a legend."""

from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
MARGIN = {"left": 90, "right": 200, "top": 50, "bottom": 70}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    return np.arange(math.ceil(lo / step) * step, hi + 0.5 * step, step)


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False) -> str:
    """Render ``{name: (x, y)}`` as an SVG document string.

    With ``logy`` the y values are plotted as ``log10``; non-positive values
    are dropped from that series.
    """
    pts = {}
    for name, (x, y) in series.items():
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
            y = np.where(keep, np.log10(np.where(y > 0, y, 1.0)), 0.0)
        pts[name] = (x[keep], y[keep])
    allx = np.concatenate([p[0] for p in pts.values()] or [np.zeros(1)])
    ally = np.concatenate([p[1] for p in pts.values()] or [np.zeros(1)])
    if allx.size == 0:
        allx, ally = np.zeros(1), np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    L, R = MARGIN["left"], WIDTH - MARGIN["right"]
    T, B = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def sx(v):
        return L + (v - x0) / (x1 - x0) * (R - L)

    def sy(v):
        return B - (v - y0) / (y1 - y0) * (B - T)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
           f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="13">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{(L + R) / 2}" y="{T - 20}" text-anchor="middle" font-size="16">'
           f'{escape(title)}</text>',
           f'<line x1="{L}" y1="{B}" x2="{R}" y2="{B}" stroke="black"/>',
           f'<line x1="{L}" y1="{B}" x2="{L}" y2="{T}" stroke="black"/>']
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{sx(v):.1f}" y1="{B}" x2="{sx(v):.1f}" y2="{B + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(v):.1f}" y="{B + 20}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y0, y1):
        label = _fmt(10 ** v) if logy else _fmt(v)
        out.append(f'<line x1="{L - 5}" y1="{sy(v):.1f}" x2="{L}" y2="{sy(v):.1f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{sy(v) + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 20}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 20 {(T + B) / 2})">{escape(ylabel)}</text>')
    for i, (name, (x, y)) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        ly = T + 20 * i + 10
        out.append(f'<line x1="{R + 15}" y1="{ly}" x2="{R + 45}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{R + 52}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
