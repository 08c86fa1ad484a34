"""Static SVG line plots with no plotting dependency.

CSV files are the authoritative outputs; these figures are quick visual
summaries rebuilt from the same data. Axes are linear; pass already-
transformed values (the sweep plot passes log10 run lengths).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

_WIDTH, _HEIGHT = 760, 500
_ML, _MR, _MT, _MB = 78, 24, 54, 64
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Series:
    name: str
    xs: list
    ys: list
    marker: bool = True


@dataclass
class LinePlot:
    title: str
    xlabel: str
    ylabel: str
    subtitle: str = ""
    series: list = field(default_factory=list)
    vlines: list = field(default_factory=list)   # (x, label)
    hlines: list = field(default_factory=list)   # (y, label)

    def add(self, name, xs, ys, marker=True):
        pts = [(float(x), float(y)) for x, y in zip(xs, ys) if _finite(x) and _finite(y)]
        self.series.append(Series(name, [p[0] for p in pts], [p[1] for p in pts], marker))

    def render(self) -> str:
        xs = [x for s in self.series for x in s.xs] + [v for v, _ in self.vlines]
        ys = [y for s in self.series for y in s.ys] + [y for y, _ in self.hlines]
        if not xs or not ys:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = _pad_range(min(xs), max(xs))
        y0, y1 = _pad_range(min(ys), max(ys))
        pw = _WIDTH - _ML - _MR
        ph = _HEIGHT - _MT - _MB

        def px(x):
            return _ML + (x - x0) / (x1 - x0) * pw

        def py(y):
            return _MT + ph - (y - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
            f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif">',
            f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
            f'<text x="{_WIDTH/2:.1f}" y="24" text-anchor="middle" font-size="16">{_esc(self.title)}</text>',
        ]
        if self.subtitle:
            out.append(
                f'<text x="{_WIDTH/2:.1f}" y="42" text-anchor="middle" font-size="11" '
                f'fill="#555">{_esc(self.subtitle)}</text>'
            )
        out.append(
            f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>'
        )
        for t in _ticks(x0, x1):
            X = px(t)
            out.append(f'<line x1="{X:.1f}" y1="{_MT+ph}" x2="{X:.1f}" y2="{_MT+ph+5}" stroke="#333"/>')
            out.append(
                f'<text x="{X:.1f}" y="{_MT+ph+19}" text-anchor="middle" font-size="11">{_fmt(t)}</text>'
            )
            out.append(
                f'<line x1="{X:.1f}" y1="{_MT}" x2="{X:.1f}" y2="{_MT+ph}" stroke="#eee"/>'
            )
        for t in _ticks(y0, y1):
            Y = py(t)
            out.append(f'<line x1="{_ML-5}" y1="{Y:.1f}" x2="{_ML}" y2="{Y:.1f}" stroke="#333"/>')
            out.append(
                f'<text x="{_ML-9}" y="{Y+4:.1f}" text-anchor="end" font-size="11">{_fmt(t)}</text>'
            )
            out.append(f'<line x1="{_ML}" y1="{Y:.1f}" x2="{_ML+pw}" y2="{Y:.1f}" stroke="#eee"/>')
        out.append(
            f'<text x="{_ML+pw/2:.1f}" y="{_HEIGHT-18}" text-anchor="middle" font-size="13">'
            f"{_esc(self.xlabel)}</text>"
        )
        out.append(
            f'<text x="20" y="{_MT+ph/2:.1f}" text-anchor="middle" font-size="13" '
            f'transform="rotate(-90 20 {_MT+ph/2:.1f})">{_esc(self.ylabel)}</text>'
        )
        for x, label in self.vlines:
            X = px(x)
            out.append(
                f'<line x1="{X:.1f}" y1="{_MT}" x2="{X:.1f}" y2="{_MT+ph}" '
                f'stroke="#888" stroke-dasharray="5,4"/>'
            )
            if label:
                out.append(
                    f'<text x="{X+4:.1f}" y="{_MT+14}" font-size="11" fill="#555">{_esc(label)}</text>'
                )
        for y, label in self.hlines:
            Y = py(y)
            out.append(
                f'<line x1="{_ML}" y1="{Y:.1f}" x2="{_ML+pw}" y2="{Y:.1f}" '
                f'stroke="#888" stroke-dasharray="5,4"/>'
            )
            if label:
                out.append(
                    f'<text x="{_ML+pw-4:.1f}" y="{Y-5:.1f}" text-anchor="end" font-size="11" '
                    f'fill="#555">{_esc(label)}</text>'
                )
        for i, s in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(s.xs, s.ys))
            if pts:
                out.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
                )
            if s.marker:
                for x, y in zip(s.xs, s.ys):
                    out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.6" fill="{color}"/>')
        lx, ly = _ML + 12, _MT + 12
        for i, s in enumerate(self.series):
            color = _COLORS[i % len(_COLORS)]
            out.append(
                f'<line x1="{lx}" y1="{ly+16*i}" x2="{lx+22}" y2="{ly+16*i}" '
                f'stroke="{color}" stroke-width="2.5"/>'
            )
            out.append(
                f'<text x="{lx+28}" y="{ly+16*i+4}" font-size="12">{_esc(s.name)}</text>'
            )
        out.append("</svg>")
        return "\n".join(out)

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.render())


def _finite(v) -> bool:
    return math.isfinite(float(v))


def _pad_range(lo: float, hi: float):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, want: int = 6):
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / max(want, 2)))
    for mult in (1, 2, 2.5, 5, 10, 20):
        if span / (step * mult) <= want:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.4g}"


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
