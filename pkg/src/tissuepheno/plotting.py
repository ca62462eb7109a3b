"""Dependency-free SVG rendering of Kaplan-Meier curves.

Output is a pure function of the curves so reruns produce identical bytes.
"""
from __future__ import annotations

from .stats.survival import KMCurve

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _step_points(curve: KMCurve, t_max: float, sx, sy, which: str = "survival"):
    ys = {"survival": curve.survival, "lo": curve.ci_lower, "hi": curve.ci_upper}[which]
    pts = [(0.0, 1.0)]
    prev = 1.0
    for t, s in zip(curve.times, ys):
        pts.append((float(t), prev))
        pts.append((float(t), float(s)))
        prev = float(s)
    pts.append((t_max, prev))
    return " ".join(f"{sx(t):.2f},{sy(s):.2f}" for t, s in pts)


def km_svg(curves: dict[str, KMCurve], title: str = "", width: int = 480, height: int = 320) -> str:
    left, right, top, bottom = 50, 20, 30, 40
    t_max = max([float(c.times.max()) for c in curves.values() if len(c.times)]
                + [float(c.censor_times.max()) for c in curves.values() if len(c.censor_times)]
                + [1.0])

    def sx(t):
        return left + (width - left - right) * t / t_max

    def sy(s):
        return top + (height - top - bottom) * (1.0 - s)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{sy(0):.2f}" x2="{width - right}" y2="{sy(0):.2f}" stroke="black"/>',
        f'<line x1="{left}" y1="{sy(0):.2f}" x2="{left}" y2="{sy(1):.2f}" stroke="black"/>',
    ]
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        out.append(f'<text x="{left - 6}" y="{sy(v) + 4:.2f}" text-anchor="end">{v:.2f}</text>')
    for i in range(5):
        t = t_max * i / 4
        out.append(f'<text x="{sx(t):.2f}" y="{height - bottom + 16}" text-anchor="middle">{t:.1f}</text>')
    out.append(f'<text x="{(left + width - right) / 2:.2f}" y="{height - 6}" text-anchor="middle">years</text>')
    if title:
        out.append(f'<text x="{left}" y="{top - 12}">{_escape(title)}</text>')
    for i, (name, c) in enumerate(curves.items()):
        col = _COLORS[i % len(_COLORS)]
        for band in ("lo", "hi"):
            out.append(f'<polyline fill="none" stroke="{col}" stroke-opacity="0.35" '
                       f'stroke-dasharray="3,3" points="{_step_points(c, t_max, sx, sy, band)}"/>')
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" '
                   f'points="{_step_points(c, t_max, sx, sy)}"/>')
        for tc in c.censor_times:
            x, y = sx(float(tc)), sy(float(c(tc)))
            out.append(f'<line x1="{x:.2f}" y1="{y - 4:.2f}" x2="{x:.2f}" y2="{y + 4:.2f}" stroke="{col}"/>')
        out.append(f'<text x="{width - right - 4}" y="{top + 14 * (i + 1)}" text-anchor="end" '
                   f'fill="{col}">{_escape(name)} (n={c.n})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
