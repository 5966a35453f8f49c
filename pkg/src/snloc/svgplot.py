"""Tiny self-contained SVG charts for the experiment outputs.

Line charts and histograms rendered straight to SVG text, so the harness
has no plotting dependency and byte-identical inputs give byte-identical
figures.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


def _finite(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = np.isfinite(xs) & np.isfinite(ys)
    return xs[keep], ys[keep]


def _ticks(lo: float, hi: float, count: int = 5):
    if not math.isfinite(lo) or not math.isfinite(hi) or lo == hi:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + k * step for k in range(count)]


class _Frame:
    def __init__(self, xlim, ylim, log_y):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.log_y = log_y
        if log_y:
            self.y0 = math.log10(max(self.y0, 1e-300))
            self.y1 = math.log10(max(self.y1, 1e-300))
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        frac = (x - self.x0) / (self.x1 - self.x0)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y):
        if self.log_y:
            y = math.log10(max(y, 1e-300))
        frac = (y - self.y0) / (self.y1 - self.y0)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)


def line_chart(series, path, title="", xlabel="", ylabel="", log_y=False,
               bands=None, hlines=None):
    """Write an SVG line chart.

    series: list of (label, xs, ys); bands: optional list of
    (label_index, xs, lo, hi) translucent IQR bands; hlines: list of
    (label, y) reference lines.
    """
    pts = [(float(x), float(y)) for _, xs, ys in series
           for x, y in zip(*_finite(xs, ys))]
    if hlines:
        pts += [(0.0, float(y)) for _, y in hlines if math.isfinite(y)]
    if not pts:
        raise ValueError("nothing to plot")
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    if log_y:
        ys_pos = [y for y in ys_all if y > 0]
        ylim = (min(ys_pos), max(ys_pos)) if ys_pos else (1e-3, 1.0)
    else:
        ylim = (min(ys_all), max(ys_all))
    frame = _Frame((min(xs_all), max(xs_all)), ylim, log_y)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
           f'font-size="15" font-family="sans-serif">{title}</text>']
    _axes(out, frame, xlabel, ylabel, log_y)
    if bands:
        for idx, xs, lo, hi in bands:
            color = PALETTE[idx % len(PALETTE)]
            xs = np.asarray(xs, dtype=float)
            lo = np.asarray(lo, dtype=float)
            hi = np.asarray(hi, dtype=float)
            keep = np.isfinite(xs) & np.isfinite(lo) & np.isfinite(hi)
            if log_y:
                keep &= (lo > 0) & (hi > 0)
            xs, lo, hi = xs[keep], lo[keep], hi[keep]
            if not xs.size:
                continue
            fwd = " ".join(f"{frame.px(x):.2f},{frame.py(h):.2f}"
                           for x, h in zip(xs, hi))
            back = " ".join(f"{frame.px(x):.2f},{frame.py(l):.2f}"
                            for x, l in zip(xs[::-1], lo[::-1]))
            out.append(f'<polygon points="{fwd} {back}" fill="{color}" '
                       f'opacity="0.15" stroke="none"/>')
    for k, (label, xs, ys) in enumerate(series):
        xs, ys = _finite(xs, ys)
        if log_y:
            keep = ys > 0
            xs, ys = xs[keep], ys[keep]
        if not xs.size:
            continue
        color = PALETTE[k % len(PALETTE)]
        points = " ".join(f"{frame.px(x):.2f},{frame.py(y):.2f}"
                          for x, y in zip(xs, ys))
        out.append(f'<polyline points="{points}" fill="none" '
                   f'stroke="{color}" stroke-width="1.8"/>')
        out.append(f'<text x="{WIDTH - MARGIN_R - 6}" '
                   f'y="{MARGIN_T + 16 * (k + 1)}" text-anchor="end" '
                   f'font-size="12" font-family="sans-serif" '
                   f'fill="{color}">{label}</text>')
    for j, (label, y) in enumerate(hlines or []):
        if not (math.isfinite(y) and (not log_y or y > 0)):
            continue
        py = frame.py(y)
        out.append(f'<line x1="{MARGIN_L}" y1="{py:.2f}" '
                   f'x2="{WIDTH - MARGIN_R}" y2="{py:.2f}" stroke="#555" '
                   f'stroke-dasharray="6 4" stroke-width="1.2"/>')
        out.append(f'<text x="{MARGIN_L + 4}" y="{py - 4:.2f}" '
                   f'font-size="11" font-family="sans-serif" '
                   f'fill="#555">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
    return path


def histogram(values, path, bins=25, title="", xlabel="", ylabel="count",
              vline: float | None = 0.0):
    """Write an SVG histogram; `vline` draws a dashed reference line."""
    values = np.asarray([v for v in np.asarray(values, dtype=float).ravel()
                         if math.isfinite(v)])
    if values.size == 0:
        raise ValueError("nothing to plot")
    counts, edges = np.histogram(values, bins=bins)
    frame = _Frame((float(edges[0]), float(edges[-1])),
                   (0.0, float(counts.max())), log_y=False)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
           f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
           f'font-size="15" font-family="sans-serif">{title}</text>']
    _axes(out, frame, xlabel, ylabel, log_y=False)
    for c, e0, e1 in zip(counts, edges[:-1], edges[1:]):
        x0, x1 = frame.px(e0), frame.px(e1)
        y0, y1 = frame.py(0.0), frame.py(float(c))
        out.append(f'<rect x="{x0:.2f}" y="{y1:.2f}" '
                   f'width="{max(x1 - x0 - 1, 0.5):.2f}" '
                   f'height="{max(y0 - y1, 0.0):.2f}" fill="{PALETTE[0]}" '
                   f'opacity="0.8"/>')
    if vline is not None and edges[0] <= vline <= edges[-1]:
        px = frame.px(vline)
        out.append(f'<line x1="{px:.2f}" y1="{MARGIN_T}" x2="{px:.2f}" '
                   f'y2="{HEIGHT - MARGIN_B}" stroke="#555" '
                   f'stroke-dasharray="6 4" stroke-width="1.2"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out))
    return path


def _axes(out, frame, xlabel, ylabel, log_y):
    x_axis_y = HEIGHT - MARGIN_B
    out.append(f'<line x1="{MARGIN_L}" y1="{x_axis_y}" '
               f'x2="{WIDTH - MARGIN_R}" y2="{x_axis_y}" stroke="black"/>')
    out.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
               f'y2="{x_axis_y}" stroke="black"/>')
    for tx in _ticks(frame.x0, frame.x1):
        px = frame.px(tx)
        out.append(f'<line x1="{px:.2f}" y1="{x_axis_y}" x2="{px:.2f}" '
                   f'y2="{x_axis_y + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{x_axis_y + 18}" '
                   f'text-anchor="middle" font-size="11" '
                   f'font-family="sans-serif">{tx:.4g}</text>')
    for ty in _ticks(frame.y0, frame.y1):
        value = 10 ** ty if log_y else ty
        py = frame.py(value)
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{py:.2f}" '
                   f'x2="{MARGIN_L}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{py + 4:.2f}" '
                   f'text-anchor="end" font-size="11" '
                   f'font-family="sans-serif">{value:.3g}</text>')
    out.append(f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) / 2:.1f}" '
               f'y="{HEIGHT - 12}" text-anchor="middle" font-size="13" '
               f'font-family="sans-serif">{xlabel}</text>')
    out.append(f'<text x="18" y="{(MARGIN_T + HEIGHT - MARGIN_B) / 2:.1f}" '
               f'text-anchor="middle" font-size="13" font-family="sans-serif" '
               f'transform="rotate(-90 18 {(MARGIN_T + HEIGHT - MARGIN_B) / 2:.1f})"'
               f'>{ylabel}</text>')
