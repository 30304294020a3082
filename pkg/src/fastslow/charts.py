"""Minimal deterministic SVG charts.

Hand-rolled on purpose: the determinism contract requires byte-identical
output for identical inputs, which rules out plotting libraries that embed
timestamps or environment-dependent metadata.
"""
from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50

PALETTE = {
    "fast": "#1f77b4",
    "slow": "#ff7f0e",
    "random": "#2ca02c",
    "our_selector": "#d62728",
    "oracle": "#9467bd",
}
_FALLBACK = "#7f7f7f"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _color(name: str) -> str:
    return PALETTE.get(name, _FALLBACK)


class _Frame:
    def __init__(self, xlo, xhi, ylo, yhi):
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + 1.0
        pad_x = 0.04 * (xhi - xlo)
        pad_y = 0.06 * (yhi - ylo)
        self.xlo, self.xhi = xlo - pad_x, xhi + pad_x
        self.ylo, self.yhi = ylo - pad_y, yhi + pad_y

    def px(self, x: float) -> float:
        return MARGIN_L + (x - self.xlo) / (self.xhi - self.xlo) * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y: float) -> float:
        return HEIGHT - MARGIN_B - (y - self.ylo) / (self.yhi - self.ylo) * (HEIGHT - MARGIN_T - MARGIN_B)

    def ticks(self, lo: float, hi: float, n: int = 5) -> list[float]:
        return [lo + i * (hi - lo) / (n - 1) for i in range(n)]


def _finite_points(points):
    return [(x, y) for x, y in points if math.isfinite(x) and math.isfinite(y)]


def _bounds(all_points):
    xs = [p[0] for p in all_points]
    ys = [p[1] for p in all_points]
    if not xs:
        return _Frame(0.0, 1.0, 0.0, 1.0)
    return _Frame(min(xs), max(xs), min(ys), max(ys))


def _chrome(frame: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<text x="{(MARGIN_L + WIDTH - MARGIN_R) // 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{(MARGIN_T + HEIGHT - MARGIN_B) // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {(MARGIN_T + HEIGHT - MARGIN_B) // 2})">{ylabel}</text>',
    ]
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for tx in frame.ticks(frame.xlo, frame.xhi):
        px = frame.px(tx)
        parts.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(
            f'<text x="{_fmt(px)}" y="{y0 + 18}" text-anchor="middle" font-size="10">{_fmt(tx)}</text>'
        )
    for ty in frame.ticks(frame.ylo, frame.yhi):
        py = frame.py(ty)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 7}" y="{_fmt(py + 3)}" text-anchor="end" font-size="10">{_fmt(ty)}</text>'
        )
    return parts


def _legend(parts: list[str], names: list[str]) -> None:
    lx = WIDTH - MARGIN_R + 12
    for i, name in enumerate(names):
        ly = MARGIN_T + 16 + 18 * i
        parts.append(f'<rect x="{lx}" y="{ly - 9}" width="12" height="12" fill="{_color(name)}"/>')
        parts.append(f'<text x="{lx + 17}" y="{ly + 2}" font-size="11">{name}</text>')


def line_chart_svg(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Polyline per named series; non-finite points are dropped."""
    clean = {name: _finite_points(pts) for name, pts in series.items()}
    frame = _bounds([p for pts in clean.values() for p in pts])
    parts = _chrome(frame, title, xlabel, ylabel)
    for name, pts in clean.items():
        if not pts:
            continue
        coords = " ".join(f"{_fmt(frame.px(x))},{_fmt(frame.py(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{_color(name)}" stroke-width="1.5"/>')
    _legend(parts, list(series.keys()))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_chart_svg(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str) -> str:
    """Scatter per named series; non-finite points are dropped."""
    clean = {name: _finite_points(pts) for name, pts in series.items()}
    frame = _bounds([p for pts in clean.values() for p in pts])
    parts = _chrome(frame, title, xlabel, ylabel)
    for name, pts in clean.items():
        for x, y in pts:
            parts.append(
                f'<circle cx="{_fmt(frame.px(x))}" cy="{_fmt(frame.py(y))}" r="3.5" '
                f'fill="{_color(name)}" fill-opacity="0.65"/>'
            )
    _legend(parts, list(series.keys()))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
