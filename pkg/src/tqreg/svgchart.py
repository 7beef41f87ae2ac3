"""Minimal SVG 1.1 line charts (axes, ticks, polylines, legend)."""

import math
from xml.sax.saxutils import escape

__all__ = ["line_chart", "write_charts"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(v)
        v += step
    return out


def _fmt(v):
    return f"{v:.6g}"


def line_chart(series, title, xlabel, ylabel, x0=0, y0=0, width=480, height=320):
    """SVG group for one panel; ``series`` maps a label to ``(xs, ys)``."""
    left, right, top, bottom = 60, 130, 30, 45
    pw, ph = width - left - right, height - top - bottom
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if math.isfinite(y)]
    if pts:
        xmin, xmax = min(p[0] for p in pts), max(p[0] for p in pts)
        ymin, ymax = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        xmin, xmax, ymin, ymax = 0.0, 1.0, 0.0, 1.0
    if xmax <= xmin:
        xmax = xmin + 1.0
    if ymax <= ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5

    def sx(x):
        return x0 + left + (x - xmin) / (xmax - xmin) * pw

    def sy(y):
        return y0 + top + (1.0 - (y - ymin) / (ymax - ymin)) * ph

    out = ['<g font-family="sans-serif" font-size="11">']
    out.append(
        f'<text x="{x0 + left + pw / 2:.1f}" y="{y0 + 18}" text-anchor="middle" '
        f'font-size="13">{escape(title)}</text>'
    )
    out.append(
        f'<rect x="{x0 + left}" y="{y0 + top}" width="{pw}" height="{ph}" '
        f'fill="none" stroke="#000"/>'
    )
    for t in _ticks(xmin, xmax):
        x = sx(t)
        out.append(f'<line x1="{x:.1f}" y1="{y0 + top + ph}" x2="{x:.1f}" y2="{y0 + top + ph + 4}" stroke="#000"/>')
        out.append(f'<text x="{x:.1f}" y="{y0 + top + ph + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ymin, ymax):
        y = sy(t)
        out.append(f'<line x1="{x0 + left - 4}" y1="{y:.1f}" x2="{x0 + left}" y2="{y:.1f}" stroke="#000"/>')
        out.append(f'<text x="{x0 + left - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(
        f'<text x="{x0 + left + pw / 2:.1f}" y="{y0 + height - 8}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text transform="translate({x0 + 14},{y0 + top + ph / 2:.1f}) rotate(-90)" '
        f'text-anchor="middle">{escape(ylabel)}</text>'
    )
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = y0 + top + 14 * k + 8
        lx = x0 + left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 22}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</g>")
    return "\n".join(out)


def write_charts(path, panels, width=480, height=320):
    """Write panels side by side; each panel is ``(series, title, xlabel, ylabel)``."""
    total = width * len(panels)
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{total}" height="{height}" '
        f'viewBox="0 0 {total} {height}">',
        f'<rect width="{total}" height="{height}" fill="#fff"/>',
    ]
    for k, (series, title, xlabel, ylabel) in enumerate(panels):
        body.append(line_chart(series, title, xlabel, ylabel, x0=k * width, width=width, height=height))
    body.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n' + "\n".join(body) + "\n")
