"""Static SVG 1.1 charts built from plain strings (no plotting backend)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

HEADER = (
    '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
    '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
)
POSITIVE = "#d6604d"
NEGATIVE = "#4393c3"
SERIES = ("#1b7837", "#762a83", "#e08214", "#2166ac")


class Svg:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def rect(self, x: float, y: float, w: float, h: float, fill: str, extra: str = "") -> None:
        self.parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}"{extra}/>')

    def line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#333333", dash: bool = False) -> None:
        style = ' stroke-dasharray="4,3"' if dash else ""
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}"{style}/>')

    def text(self, x: float, y: float, s: str, anchor: str = "start", size: int = 12, extra: str = "") -> None:
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
                          f'text-anchor="{anchor}"{extra}>{escape(s)}</text>')

    def polyline(self, points: Sequence[tuple[float, float]], stroke: str) -> None:
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="2"/>')

    def polygon(self, points: Sequence[tuple[float, float]], fill: str, opacity: float = 0.2) -> None:
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>')

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (f'{HEADER}<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n{body}\n</svg>\n')


def centered_bars(labels: Sequence[str], values: Sequence[float], center: float, title: str,
                  notes: Sequence[str] = ()) -> str:
    """Horizontal bars running from ``center`` to ``center + value``, first
    label on top."""
    row, label_w, plot_w, pad = 26, 220, 420, 20
    top = 40 + 16 * len(notes)
    height = top + row * len(values) + 40
    svg = Svg(label_w + plot_w + 2 * pad + 60, height)
    svg.text(pad, 22, title, size=14, extra=' font-weight="bold"')
    for i, note in enumerate(notes):
        svg.text(pad, 40 + 16 * i, note, size=11)
    ends = [center] + [center + v for v in values]
    lo, hi = min(ends), max(ends)
    span = hi - lo or 1.0
    x0 = pad + label_w

    def sx(v: float) -> float:
        return x0 + (v - lo) / span * plot_w

    for i, (label, v) in enumerate(zip(labels, values)):
        y = top + 8 + i * row
        a, b = sorted((sx(center), sx(center + v)))
        svg.rect(a, y, max(b - a, 0.5), row - 8, POSITIVE if v > 0 else NEGATIVE)
        svg.text(x0 - 8, y + row / 2, label, anchor="end", size=11)
        svg.text(b + 4 if v >= 0 else a - 4, y + row / 2, f"{v:+.4f}", anchor="start" if v >= 0 else "end", size=10)
    bottom = top + 8 + row * len(values)
    svg.line(sx(center), top, sx(center), bottom, dash=True)
    svg.text(sx(center), bottom + 16, f"bias {center:.4f}", anchor="middle", size=11)
    return svg.render()


def band_lines(x: Sequence[float], series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str,
               x_label: str, y_range: tuple[float, float] = (-1.0, 1.0)) -> str:
    """Mean lines with +/- std bands over a log2 x axis. ``series`` maps a
    name to (means, stds)."""
    width, height, left, right, top, bottom = 560, 360, 60, 130, 40, 50
    svg = Svg(width, height)
    svg.text(left, 24, title, size=14, extra=' font-weight="bold"')
    lx = [math.log2(v) for v in x]
    x_lo, x_hi = lx[0], lx[-1] if lx[-1] > lx[0] else lx[0] + 1
    y_lo, y_hi = y_range
    pw, ph = width - left - right, height - top - bottom

    def px(v: float) -> float:
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v: float) -> float:
        v = min(max(v, y_lo), y_hi)
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    svg.line(left, top + ph, left + pw, top + ph)
    svg.line(left, top, left, top + ph)
    for v, raw in zip(lx, x):
        svg.line(px(v), top + ph, px(v), top + ph + 4)
        svg.text(px(v), top + ph + 16, f"{raw:g}", anchor="middle", size=10)
    for k in range(5):
        v = y_lo + (y_hi - y_lo) * k / 4
        svg.line(left - 4, py(v), left, py(v))
        svg.text(left - 6, py(v) + 4, f"{v:.2f}", anchor="end", size=10)
    svg.text(left + pw / 2, height - 12, x_label, anchor="middle", size=11)
    for i, (name, (means, stds)) in enumerate(series.items()):
        color = SERIES[i % len(SERIES)]
        upper = [(px(a), py(m + s)) for a, m, s in zip(lx, means, stds)]
        lower = [(px(a), py(m - s)) for a, m, s in zip(lx, means, stds)]
        svg.polygon(upper + lower[::-1], color)
        svg.polyline([(px(a), py(m)) for a, m in zip(lx, means)], color)
        svg.line(left + pw + 12, top + 10 + 18 * i, left + pw + 30, top + 10 + 18 * i, stroke=color)
        svg.text(left + pw + 34, top + 14 + 18 * i, name, size=11)
    return svg.render()
