"""Minimal static SVG line charts (no plotting library needed)."""

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["svg_line_plot", "write_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#17becf", "#7f7f7f")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def svg_line_plot(series, xlabel="mu", ylabel="s", title="", width=640, height=420,
                  logy=False):
    """SVG document with one polyline per series.

    Parameters
    ----------
    series : list of (label, x, y)
        Non-finite points are skipped.
    logy : bool
        Plot ``log10(y)``; non-positive values are skipped.
    """
    left, right, top, bottom = 70, 150, 30, 50
    pw, ph = width - left - right, height - top - bottom
    cleaned = []
    for label, x, y in series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
            y = np.where(ok, np.log10(np.where(ok, y, 1.0)), np.nan)
        cleaned.append((label, x[ok], y[ok]))
    xs = np.concatenate([c[1] for c in cleaned] or [np.zeros(1)])
    ys = np.concatenate([c[2] for c in cleaned] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{px(t):.2f}" y1="{top + ph}" x2="{px(t):.2f}" '
                   f'y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 16}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.2g}" if logy else f"{t:.4g}"
        out.append(f'<line x1="{left - 4}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k, (label, x, y) in enumerate(cleaned):
        color = _COLORS[k % len(_COLORS)]
        if x.size:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')
        ly = top + 14 * (k + 1)
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series, **kw):
    with open(path, "w") as fh:
        fh.write(svg_line_plot(series, **kw))
