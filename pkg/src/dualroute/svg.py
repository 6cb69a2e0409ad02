"""Minimal standalone SVG charts: line charts with shaded bands and end
dots, and bar charts.  Every drawn series carries its exact values in a
``data-values`` attribute so figures can be checked against their CSVs."""
from __future__ import annotations

import re
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1b4f72", "#c0392b", "#27ae60", "#8e44ad", "#d68910", "#2e4053", "#16a085",
           "#7f8c8d")

W, H = 720, 400
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 40, 48


def _fmt(v):
    return f"{v:.2f}"


def _values_attr(values):
    return " ".join(repr(float(v)) for v in values)


def _scale(lo, hi, a, b):
    if hi == lo:
        hi, lo = hi + 0.5, lo - 0.5
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def _header(title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="Helvetica, Arial, sans-serif" font-size="11">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
            f'{escape(title)}</text>']


def line_chart(path, x_labels, series, title="", bands=(), dots=(), ylabel="", zero_line=True):
    """``series``: ordered mapping name -> values aligned with ``x_labels``.
    ``bands``: (first, last) index pairs shaded grey.  ``dots``: (index,
    value, name) markers, e.g. the final prediction of each path."""
    n = len(x_labels)
    finite = [v for vals in series.values() for v in vals if np.isfinite(v)]
    finite += [d[1] for d in dots]
    lo, hi = (min(finite), max(finite)) if finite else (0.0, 1.0)
    if zero_line:
        lo, hi = min(lo, 0.0), max(hi, 0.0)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    lo, hi = lo - pad, hi + pad
    sx = _scale(0, max(n - 1, 1), LEFT, W - RIGHT)
    sy = _scale(lo, hi, H - BOTTOM, TOP)
    out = _header(title)
    for a, b in bands:
        x0, x1 = sx(a - 0.5 if a > 0 else a), sx(b + 0.5 if b < n - 1 else b)
        out.append(f'<rect class="band" x="{_fmt(x0)}" y="{TOP}" width="{_fmt(x1 - x0)}" '
                   f'height="{H - TOP - BOTTOM}" fill="#d5d8dc" opacity="0.6"/>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" '
               f'height="{H - TOP - BOTTOM}" fill="none" stroke="#555"/>')
    for t in _ticks(lo, hi):
        y = sy(t)
        out.append(f'<line x1="{LEFT - 4}" x2="{LEFT}" y1="{_fmt(y)}" y2="{_fmt(y)}" '
                   f'stroke="#555"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">{t:.3g}</text>')
    if zero_line and lo < 0 < hi:
        out.append(f'<line x1="{LEFT}" x2="{W - RIGHT}" y1="{_fmt(sy(0))}" y2="{_fmt(sy(0))}" '
                   f'stroke="#999" stroke-dasharray="3,3"/>')
    step = max(1, n // 8)
    for i in range(0, n, step):
        out.append(f'<text x="{_fmt(sx(i))}" y="{H - BOTTOM + 16}" text-anchor="middle">'
                   f'{escape(str(x_labels[i]))}</text>')
    if ylabel:
        out.append(f'<text transform="translate(16,{H / 2:.1f}) rotate(-90)" '
                   f'text-anchor="middle">{escape(ylabel)}</text>')
    for k, (name, vals) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(i))},{_fmt(sy(v))}" for i, v in enumerate(vals)
                       if np.isfinite(v))
        out.append(f'<polyline class="series" data-name="{escape(name)}" '
                   f'data-values="{_values_attr(vals)}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 14 + 16 * k
        out.append(f'<line x1="{W - RIGHT + 10}" x2="{W - RIGHT + 28}" y1="{ly - 4}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - RIGHT + 32}" y="{ly}">{escape(name)}</text>')
    names = list(series)
    for idx, val, name in dots:
        k = names.index(name) if name in names else 0
        out.append(f'<circle class="dot" data-name="{escape(name)}" data-value="{float(val)!r}" '
                   f'cx="{_fmt(sx(idx))}" cy="{_fmt(sy(val))}" r="3.5" '
                   f'fill="{PALETTE[k % len(PALETTE)]}"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def bar_chart(path, labels, values, title="", ylabel=""):
    values = [float(v) for v in values]
    lo, hi = min(0.0, min(values, default=0.0)), max(0.0, max(values, default=1.0))
    if hi == lo:
        hi = lo + 1.0
    sy = _scale(lo, hi * 1.05, H - BOTTOM, TOP)
    n = max(len(values), 1)
    slot = (W - LEFT - RIGHT) / n
    out = _header(title)
    out.append(f'<g class="bars" data-values="{_values_attr(values)}">')
    for i, (lab, v) in enumerate(zip(labels, values)):
        x = LEFT + i * slot + 0.15 * slot
        y0, y1 = sy(0.0), sy(v)
        out.append(f'<rect x="{_fmt(x)}" y="{_fmt(min(y0, y1))}" width="{_fmt(0.7 * slot)}" '
                   f'height="{_fmt(abs(y1 - y0))}" fill="{PALETTE[0]}"/>')
        out.append(f'<text x="{_fmt(x + 0.35 * slot)}" y="{H - BOTTOM + 16}" '
                   f'text-anchor="middle">{escape(str(lab))}</text>')
    out.append("</g>")
    for t in _ticks(lo, hi):
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(sy(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<line x1="{LEFT}" x2="{W - RIGHT}" y1="{_fmt(sy(0))}" y2="{_fmt(sy(0))}" '
               f'stroke="#555"/>')
    if ylabel:
        out.append(f'<text transform="translate(16,{H / 2:.1f}) rotate(-90)" '
                   f'text-anchor="middle">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def read_series(path):
    """name -> values for every polyline (or the bar group) in a chart."""
    text = open(path).read()
    out = {}
    for m in re.finditer(r'data-name="([^"]*)" data-values="([^"]*)"', text):
        out[m.group(1)] = [float(v) for v in m.group(2).split()]
    m = re.search(r'class="bars" data-values="([^"]*)"', text)
    if m:
        out["bars"] = [float(v) for v in m.group(1).split()] if m.group(1) else []
    return out
