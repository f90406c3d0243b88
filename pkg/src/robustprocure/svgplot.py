"""Minimal SVG line charts (polylines, axes, ticks, legend)."""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#e6a700", "#2ca02c", "#d62728")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series: list[Series], title: str, xlabel: str, ylabel: str,
               width: int = 480, height: int = 320, x0: float = 0.0, y0: float = 0.0,
               y_range: tuple[float, float] | None = None) -> str:
    """One chart as an SVG <g> element placed at (x0, y0)."""
    left, right, top, bottom = 56, 16, 32, 44
    pw, ph = width - left - right, height - top - bottom
    xs = [v for s in series for v in s.x]
    ys = [v for s in series for v in s.y]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = y_range if y_range else (min(ys), max(ys))
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [f'<g transform="translate({x0:g},{y0:g})">',
           f'<text x="{width / 2:g}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in _ticks(x_lo, x_hi):
        out.append(f'<line x1="{px(t):.2f}" y1="{top + ph}" x2="{px(t):.2f}" y2="{top + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 16}" text-anchor="middle" font-size="10">{t:.3g}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{left - 4}" y1="{py(t):.2f}" x2="{left}" y2="{py(t):.2f}" stroke="#444"/>')
        out.append(f'<text x="{left - 6}" y="{py(t) + 3:.2f}" text-anchor="end" font-size="10">{t:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:g}" y="{height - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:g}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 14 {top + ph / 2:g})">{escape(ylabel)}</text>')
    for i, s in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.x, s.y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = top + 14 + 14 * i
        out.append(f'<line x1="{left + pw - 90}" y1="{ly}" x2="{left + pw - 74}" y2="{ly}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 70}" y="{ly + 4}" font-size="10">{escape(s.label)}</text>')
    out.append("</g>")
    return "\n".join(out)


def document(charts: list[str], width: int, height: int) -> str:
    body = "\n".join(charts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f'{body}\n</svg>\n')
