"""Dependency-free SVG line charts for experiment tables.

Output is a pure function of (table, spec): coordinates are printed with a
fixed format so regenerating from the same CSV is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["PlotSpec", "emit_plot"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 30, 46


@dataclass
class PlotSpec:
    x: str
    y: str
    series: tuple = ()  # columns whose joined values name each line
    logx: bool = False
    logy: bool = False
    title: str = ""
    width: int = 640
    height: int = 420


def _transform(v: float, log: bool) -> float:
    return math.log10(v) if log else v


def _ticks(lo: float, hi: float, log: bool):
    """(position, label) pairs in transformed coordinates."""
    if log:
        first, last = math.ceil(lo - 1e-9), math.floor(hi + 1e-9)
        powers = [p for p in range(first, last + 1)]
        if len(powers) >= 2:
            return [(float(p), f"1e{p}") for p in powers]
    out = []
    for i in range(5):
        t = lo + (hi - lo) * i / 4
        label = f"1e{t:.2g}" if log else f"{t:.3g}"
        out.append((t, label))
    return out


def emit_plot(table, spec: PlotSpec) -> str:
    """Render one polyline per series; single-point series become markers."""
    cols = {c: i for i, c in enumerate(table.columns)}
    for name in (spec.x, spec.y, *spec.series):
        if name not in cols:
            raise ValueError(f"column {name!r} not in table {table.name!r}")
    if not table.rows:
        raise ValueError("empty table")

    series: dict[str, list] = {}
    for row in table.rows:
        try:
            x = float(row[cols[spec.x]])
            y = float(row[cols[spec.y]])
        except (TypeError, ValueError):
            continue
        if not (math.isfinite(x) and math.isfinite(y)):
            continue
        if (spec.logx and x <= 0) or (spec.logy and y <= 0):
            continue
        key = "/".join(str(row[cols[c]]) for c in spec.series) or spec.y
        series.setdefault(key, []).append((_transform(x, spec.logx),
                                           _transform(y, spec.logy)))
    if not series:
        raise ValueError("no finite plottable points")

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    xlo, xhi = min(xs), max(xs)
    ylo, yhi = min(ys), max(ys)
    if xhi == xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if yhi == ylo:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    iw = spec.width - _MARGIN_L - _MARGIN_R
    ih = spec.height - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + iw * (x - xlo) / (xhi - xlo)

    def py(y):
        return _MARGIN_T + ih * (yhi - y) / (yhi - ylo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect width="{spec.width}" height="{spec.height}" fill="white"/>',
    ]
    if spec.title:
        parts.append(f'<text x="{spec.width / 2:.2f}" y="18" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif">{spec.title}</text>')

    ax_y = _MARGIN_T + ih
    parts.append(f'<line x1="{_MARGIN_L}" y1="{ax_y}" x2="{_MARGIN_L + iw}" '
                 f'y2="{ax_y}" stroke="black"/>')
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
                 f'y2="{ax_y}" stroke="black"/>')
    for t, label in _ticks(xlo, xhi, spec.logx):
        parts.append(f'<line x1="{px(t):.2f}" y1="{ax_y}" x2="{px(t):.2f}" '
                     f'y2="{ax_y + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(t):.2f}" y="{ax_y + 16}" text-anchor="middle" '
                     f'font-size="10" font-family="sans-serif">{label}</text>')
    for t, label in _ticks(ylo, yhi, spec.logy):
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{py(t):.2f}" x2="{_MARGIN_L}" '
                     f'y2="{py(t):.2f}" stroke="black"/>')
        parts.append(f'<text x="{_MARGIN_L - 6}" y="{py(t) + 3:.2f}" text-anchor="end" '
                     f'font-size="10" font-family="sans-serif">{label}</text>')
    parts.append(f'<text x="{_MARGIN_L + iw / 2:.2f}" y="{spec.height - 8}" '
                 f'text-anchor="middle" font-size="11" font-family="sans-serif">{spec.x}</text>')
    parts.append(f'<text x="14" y="{_MARGIN_T + ih / 2:.2f}" text-anchor="middle" '
                 f'font-size="11" font-family="sans-serif" '
                 f'transform="rotate(-90 14 {_MARGIN_T + ih / 2:.2f})">{spec.y}</text>')

    for i, (key, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        if len(pts) == 1:
            x, y = pts[0]
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" '
                         f'fill="{color}"/>')
        else:
            coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')

    for i, key in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        ly = _MARGIN_T + 6 + 14 * i
        lx = _MARGIN_L + iw - 130
        parts.append(f'<rect x="{lx}" y="{ly}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{lx + 14}" y="{ly + 9}" font-size="10" '
                     f'font-family="sans-serif">{key}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
