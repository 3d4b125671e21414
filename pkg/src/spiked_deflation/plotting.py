"""Tiny dependency-free SVG writer for the sweep and spectrum figures."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .rmt_kernel import SemicircleLaw

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 140, 30, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

PLOT_KINDS = {
    "alignments": ("alignment", ["rho11", "rho12", "rho21", "rho22"]),
    "eigenvalues": ("eigenvalue", ["lambda1", "lambda2"]),
    "eta": ("eta12", ["eta12"]),
}

_LABELS = {
    "rho11": "<u1,x1>", "rho12": "<u1,x2>", "rho21": "<u2,x1>", "rho22": "<u2,x2>",
    "lambda1": "lambda1", "lambda2": "lambda2", "eta12": "<u1,u2>",
}


def _fmt(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if abs(v) < 1e4 else f"{v:.3g}"


class _Canvas:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.items = []

    def px(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)

    def py(self, y):
        return HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)

    def line(self, xs, ys, color, width=1.5):
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        self.items.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def seg(self, xa, ya, xb, yb, color, width=1.0):
        self.items.append(
            f'<line x1="{self.px(xa):.2f}" y1="{self.py(ya):.2f}" x2="{self.px(xb):.2f}" '
            f'y2="{self.py(yb):.2f}" stroke="{color}" stroke-width="{width}"/>')

    def dot(self, x, y, color, r=3.5):
        self.items.append(
            f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="{r}" fill="{color}"/>')

    def rect(self, xa, xb, y, color):
        top, base = self.py(y), self.py(0.0)
        self.items.append(
            f'<rect x="{self.px(xa):.2f}" y="{top:.2f}" width="{self.px(xb) - self.px(xa):.2f}" '
            f'height="{base - top:.2f}" fill="{color}" fill-opacity="0.45" stroke="none"/>')

    def text(self, x, y, s, anchor="middle", size=12):
        self.items.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}">{s}</text>')

    def axes(self, xlabel, ylabel, nticks=5):
        x_lo, x_hi = LEFT, WIDTH - RIGHT
        y_lo, y_hi = HEIGHT - BOTTOM, TOP
        self.items.append(
            f'<rect x="{x_lo}" y="{y_hi}" width="{x_hi - x_lo}" height="{y_lo - y_hi}" '
            f'fill="none" stroke="black"/>')
        for t in np.linspace(self.x0, self.x1, nticks):
            self.text(self.px(t), y_lo + 18, _fmt(t))
        for t in np.linspace(self.y0, self.y1, nticks):
            self.text(x_lo - 8, self.py(t) + 4, _fmt(t), anchor="end")
        self.text((x_lo + x_hi) / 2, HEIGHT - 15, xlabel, size=14)
        self.items.append(
            f'<text x="18" y="{(y_lo + y_hi) / 2:.2f}" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle" transform="rotate(-90 18 {(y_lo + y_hi) / 2:.2f})">{ylabel}</text>')

    def legend(self, entries):
        for k, (label, color) in enumerate(entries):
            y = TOP + 14 + 20 * k
            x = WIDTH - RIGHT + 14
            self.items.append(f'<circle cx="{x}" cy="{y - 4}" r="4" fill="{color}"/>')
            self.text(x + 10, y, label, anchor="start")

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}">')
        body = "\n".join(self.items)
        return f'{head}\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'


def _limits(vals, pad=0.05):
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def sweep_svg(rows, kind: str) -> str:
    """Dots with +-1 std whiskers for the empirical means, lines for predictions."""
    if not rows:
        raise ValueError("no rows to plot")
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_KINDS)}")
    ylabel, stats = PLOT_KINDS[kind]
    xs = [r["beta1"] for r in rows]
    yvals = []
    for r in rows:
        for s in stats:
            m, sd, p = r.get(f"{s}_mean"), r.get(f"{s}_std"), r.get(f"{s}_pred")
            if m is not None:
                yvals += [m - (sd or 0), m + (sd or 0)]
            if p is not None:
                yvals.append(p)
    c = _Canvas(_limits(xs), _limits(yvals))
    c.axes("beta1", ylabel)
    for s, color in zip(stats, COLORS):
        for r in rows:
            m, sd = r.get(f"{s}_mean"), r.get(f"{s}_std")
            if m is None:
                continue
            if sd:
                c.seg(r["beta1"], m - sd, r["beta1"], m + sd, color)
            c.dot(r["beta1"], m, color)
        # break the prediction line wherever the solver did not converge
        run = []
        for r in rows + [None]:
            p = None if r is None else r.get(f"{s}_pred")
            if p is None:
                if len(run) > 1:
                    c.line(*zip(*run), color)
                run = []
            else:
                run.append((r["beta1"], p))
    c.legend([(_LABELS[s], col) for s, col in zip(stats, COLORS)])
    return c.render()


def spectrum_svg(report, bins: int = 40) -> str:
    """Eigenvalue histogram (density scale) with the semicircle overlay."""
    ev = np.asarray(report.eigenvalues)
    if ev.size == 0:
        raise ValueError("empty spectrum")
    law = SemicircleLaw(report.gamma)
    lo = min(ev.min(), -law.gamma) * 1.05
    hi = max(ev.max(), law.gamma) * 1.05
    counts, edges = np.histogram(ev, bins=bins, range=(lo, hi))
    dens = counts / (ev.size * np.diff(edges))
    grid = np.linspace(-law.gamma, law.gamma, 201)
    ymax = max(dens.max(), law.pdf(0.0)) * 1.1
    c = _Canvas((lo, hi), (0.0, ymax))
    c.axes("eigenvalue", "density")
    for a, b, h in zip(edges[:-1], edges[1:], dens):
        if h > 0:
            c.rect(a, b, h, COLORS[0])
    c.line(grid, law.pdf(grid), COLORS[1], width=2.0)
    c.legend([("ESD", COLORS[0]), ("semicircle", COLORS[1])])
    c.text(WIDTH - RIGHT + 14, TOP + 70, f"KS={report.ks_distance:.4f}", anchor="start")
    return c.render()


def emit_plot(data, kind: str, path) -> Path:
    """Render ``data`` (sweep rows or a SpectrumReport) to an SVG file."""
    if kind == "spectrum":
        svg = spectrum_svg(data)
    else:
        svg = sweep_svg(list(data), kind)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path
