"""Minimal deterministic SVG figures: line panels, log-log scatter, polar K-string."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
SHADES = {"S": "#dbe9f6", "W": "#f9d9d9", "D": "#dff2dc", "impulse": "#fff1c2", "plateau": "#e8ddf4"}


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Axes:
    def __init__(self, xlim: tuple[float, float], ylim: tuple[float, float]):
        x0, x1 = xlim
        y0, y1 = ylim
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x: float) -> float:
        x0, x1 = self.xlim
        return MARGIN["left"] + (x - x0) / (x1 - x0) * self.pw

    def py(self, y: float) -> float:
        y0, y1 = self.ylim
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * self.ph


def _limits(values: Sequence[np.ndarray]) -> tuple[float, float]:
    finite = [v[np.isfinite(v)] for v in values]
    finite = [v for v in finite if v.size]
    if not finite:
        return 0.0, 1.0
    lo = min(float(v.min()) for v in finite)
    hi = max(float(v.max()) for v in finite)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    return lo - pad, hi + pad


def _header(title: str, timestamp: str | None, width: int = WIDTH, height: int = HEIGHT) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">'
    ]
    if timestamp:
        out.append(f"<!-- generated {escape(timestamp)} -->")
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    return out


def _frame(ax: _Axes, xlabel: str, ylabel: str, xticks: Sequence[tuple[float, str]], yticks) -> list[str]:
    l, t = MARGIN["left"], MARGIN["top"]
    out = [f'<rect x="{l}" y="{t}" width="{ax.pw}" height="{ax.ph}" fill="none" stroke="black"/>']
    for v, lab in xticks:
        x = ax.px(v)
        out.append(f'<line x1="{_f(x)}" y1="{t + ax.ph}" x2="{_f(x)}" y2="{t + ax.ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{t + ax.ph + 18}" text-anchor="middle">{escape(lab)}</text>')
    for v, lab in yticks:
        y = ax.py(v)
        out.append(f'<line x1="{l - 5}" y1="{_f(y)}" x2="{l}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{l - 8}" y="{_f(y + 4)}" text-anchor="end">{escape(lab)}</text>')
    out.append(f'<text x="{l + ax.pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{t + ax.ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {t + ax.ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    return out


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[tuple[float, str]]:
    vals = np.linspace(lo, hi, n)
    return [(float(v), f"{v:.3g}") for v in vals]


def _polyline(ax: _Axes, x: np.ndarray, y: np.ndarray, color: str, dash: bool = False) -> list[str]:
    """Polyline segments, broken at non-finite values."""
    out, pts = [], []
    style = ' stroke-dasharray="6,4"' if dash else ""
    for xi, yi in list(zip(x, y)) + [(math.nan, math.nan)]:
        if math.isfinite(xi) and math.isfinite(yi):
            pts.append(f"{_f(ax.px(xi))},{_f(ax.py(yi))}")
            continue
        if len(pts) == 1:
            cx, cy = pts[0].split(",")
            out.append(f'<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>')
        elif pts:
            out.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="1.5"{style}/>')
        pts = []
    return out


def _legend(entries: Sequence[tuple[str, str, bool]]) -> list[str]:
    out = []
    x = WIDTH - MARGIN["right"] - 200
    for i, (label, color, dash) in enumerate(entries):
        y = MARGIN["top"] + 16 + 16 * i
        style = ' stroke-dasharray="6,4"' if dash else ""
        out.append(f'<line x1="{x}" y1="{y - 4}" x2="{x + 24}" y2="{y - 4}" stroke="{color}" stroke-width="2"{style}/>')
        out.append(f'<text x="{x + 30}" y="{y}">{escape(label)}</text>')
    return out


def line_panel(
    x: np.ndarray,
    series: Sequence[tuple[str, np.ndarray]],
    title: str,
    xlabel: str,
    ylabel: str,
    shading: Sequence[tuple[float, float, str]] = (),
    marks: Sequence[float] = (),
    note: str | None = None,
    timestamp: str | None = None,
) -> str:
    """Line plot of one or more series against ``x`` with optional labelled shaded spans."""
    x = np.asarray(x, dtype=float)
    ys = [np.asarray(y, dtype=float) for _, y in series]
    ax = _Axes(_limits([x]), _limits(ys))
    out = _header(title, timestamp)
    for a, b, label in shading:
        color = SHADES.get(label, "#eeeeee")
        xa, xb = ax.px(max(a, ax.xlim[0])), ax.px(min(b, ax.xlim[1]))
        out.append(
            f'<rect x="{_f(xa)}" y="{MARGIN["top"]}" width="{_f(max(xb - xa, 1.0))}" height="{ax.ph}" '
            f'fill="{color}"><title>{escape(label)}</title></rect>'
        )
        out.append(f'<text x="{_f((xa + xb) / 2)}" y="{MARGIN["top"] + 14}" text-anchor="middle">{escape(label)}</text>')
    for v in marks:
        px = ax.px(v)
        out.append(
            f'<line x1="{_f(px)}" y1="{MARGIN["top"]}" x2="{_f(px)}" y2="{MARGIN["top"] + ax.ph}" '
            'stroke="#555555" stroke-dasharray="3,3"/>'
        )
    for i, y in enumerate(ys):
        out += _polyline(ax, x, y, COLORS[i % len(COLORS)])
    out += _frame(ax, xlabel, ylabel, _linear_ticks(*ax.xlim), _linear_ticks(*ax.ylim))
    out += _legend([(label, COLORS[i % len(COLORS)], False) for i, (label, _) in enumerate(series)])
    if note:
        out.append(
            f'<text x="{MARGIN["left"] + ax.pw / 2:.1f}" y="{MARGIN["top"] + ax.ph / 2:.1f}" '
            f'text-anchor="middle" font-size="16" fill="#aa0000">{escape(note)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _decade_ticks(lo: float, hi: float) -> list[tuple[float, str]]:
    ticks = [(float(e), f"1e{e}") for e in range(math.ceil(lo), math.floor(hi) + 1)]
    return ticks or _linear_ticks(lo, hi, 3)


def loglog_scatter(
    x: np.ndarray,
    y: np.ndarray,
    exponent: float,
    amplitude: float,
    stderr: float,
    title: str,
    xlabel: str,
    ylabel: str,
    timestamp: str | None = None,
) -> str:
    """Scatter on log-log axes with the dashed fit y = amplitude * x^(-exponent)."""
    lx, ly = np.log10(np.asarray(x, dtype=float)), np.log10(np.asarray(y, dtype=float))
    xs = np.linspace(lx.min(), lx.max(), 2)
    fit_ly = math.log10(amplitude) - exponent * xs
    ax = _Axes(_limits([lx]), _limits([ly, fit_ly]))
    out = _header(title, timestamp)
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{_f(ax.px(a))}" cy="{_f(ax.py(b))}" r="3.5" fill="{COLORS[0]}" fill-opacity="0.8"/>')
    out += _polyline(ax, xs, fit_ly, COLORS[1], dash=True)
    out += _frame(ax, xlabel, ylabel, _decade_ticks(*ax.xlim), _decade_ticks(*ax.ylim))
    err = "nan" if not math.isfinite(stderr) else f"{stderr:.3f}"
    out += _legend([("events", COLORS[0], False), (f"fit b = {exponent:.3f} ± {err}", COLORS[1], True)])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polar_snapshot(
    radii: np.ndarray,
    angles: np.ndarray,
    signs: np.ndarray,
    title: str,
    timestamp: str | None = None,
) -> str:
    """Closed polar curve r_i = k_i with a normal tick per node, outward for +1 and inward for -1."""
    size = 420
    cx = cy = size / 2
    radii = np.asarray(radii, dtype=float)
    rmax = float(radii.max()) if radii.size and radii.max() > 0 else 1.0
    scale = 0.38 * size / rmax
    tick = 0.06 * size
    out = _header(title, timestamp, size, size)
    pts = []
    for r, th in zip(radii, angles):
        pts.append(f"{_f(cx + scale * r * math.cos(th))},{_f(cy - scale * r * math.sin(th))}")
    out.append(f'<polygon points="{" ".join(pts)}" fill="none" stroke="{COLORS[0]}" stroke-width="1.5"/>')
    for r, th, s in zip(radii, angles, signs):
        x0, y0 = cx + scale * r * math.cos(th), cy - scale * r * math.sin(th)
        d = tick if s > 0 else -tick
        x1, y1 = x0 + d * math.cos(th), y0 - d * math.sin(th)
        color = COLORS[2] if s > 0 else COLORS[1]
        direction = "out" if s > 0 else "in"
        out.append(
            f'<line class="tick-{direction}" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
    out.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="2" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
