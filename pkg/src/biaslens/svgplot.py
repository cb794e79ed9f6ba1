"""Minimal deterministic SVG rendering for report figures.

Hand-assembled SVG 1.1 with fixed geometry and number formatting, so the
same PlotSpec always yields byte-identical output.  Data series are the
only ``<path>`` elements in the document; axes, ticks, bars and legend use
``<line>``, ``<rect>`` and ``<text>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PLOT_KINDS = ("kde-lines", "bar", "sweep-line")

_WIDTH = 880.0
_HEIGHT = 560.0
_MARGIN_LEFT = 70.0
_MARGIN_RIGHT = 20.0
_MARGIN_TOP = 40.0
_MARGIN_BOTTOM = 50.0

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass
class Series:
    """One named (x, y) data series."""

    name: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ValueError("series x and y must be equal-length 1-D arrays")
        if self.x.size == 0:
            raise ValueError("empty series")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("non-finite series values")


@dataclass
class PlotSpec:
    """What to draw: plot kind, series, and labeling."""

    kind: str
    series: list[Series]
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self) -> None:
        if self.kind not in PLOT_KINDS:
            raise ValueError(
                f"unknown plot kind {self.kind!r}; expected one of {PLOT_KINDS}"
            )
        if not self.series:
            raise ValueError("plot needs at least one series")
        if self.kind in ("kde-lines", "sweep-line"):
            for s in self.series:
                if s.x.size > 1 and np.any(np.diff(s.x) <= 0):
                    raise ValueError(
                        f"series {s.name!r}: x must be strictly increasing"
                    )


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))


def render_svg(plot: PlotSpec) -> str:
    """Render a PlotSpec to an SVG document string."""
    xs = np.concatenate([s.x for s in plot.series])
    ys = np.concatenate([s.y for s in plot.series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if plot.kind == "bar":
        y_lo = min(0.0, y_lo)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    px_lo = _MARGIN_LEFT
    px_hi = _WIDTH - _MARGIN_RIGHT
    py_lo = _HEIGHT - _MARGIN_BOTTOM
    py_hi = _MARGIN_TOP

    def sx(v: float) -> float:
        return px_lo + (v - x_lo) / (x_hi - x_lo) * (px_hi - px_lo)

    def sy(v: float) -> float:
        return py_lo + (v - y_lo) / (y_hi - y_lo) * (py_hi - py_lo)

    parts: list[str] = []
    parts.append(
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" '
        f'viewBox="0 0 {_fmt(_WIDTH)} {_fmt(_HEIGHT)}">'
    )
    parts.append(
        f'<rect x="0" y="0" width="{_fmt(_WIDTH)}" height="{_fmt(_HEIGHT)}" '
        'fill="#ffffff"/>'
    )
    if plot.title:
        parts.append(
            f'<text x="{_fmt(_WIDTH / 2)}" y="24.00" text-anchor="middle" '
            'font-family="sans-serif" font-size="16">'
            f"{_escape(plot.title)}</text>"
        )
    # axes
    parts.append(
        f'<line x1="{_fmt(px_lo)}" y1="{_fmt(py_lo)}" x2="{_fmt(px_hi)}" '
        f'y2="{_fmt(py_lo)}" stroke="#000000" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{_fmt(px_lo)}" y1="{_fmt(py_lo)}" x2="{_fmt(px_lo)}" '
        f'y2="{_fmt(py_hi)}" stroke="#000000" stroke-width="1"/>'
    )
    for i in range(5):
        frac = i / 4.0
        vx = x_lo + frac * (x_hi - x_lo)
        gx = sx(vx)
        parts.append(
            f'<line x1="{_fmt(gx)}" y1="{_fmt(py_lo)}" x2="{_fmt(gx)}" '
            f'y2="{_fmt(py_lo + 5)}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(gx)}" y="{_fmt(py_lo + 20)}" '
            'text-anchor="middle" font-family="sans-serif" font-size="11">'
            f"{_fmt_tick(vx)}</text>"
        )
        vy = y_lo + frac * (y_hi - y_lo)
        gy = sy(vy)
        parts.append(
            f'<line x1="{_fmt(px_lo - 5)}" y1="{_fmt(gy)}" x2="{_fmt(px_lo)}" '
            f'y2="{_fmt(gy)}" stroke="#000000" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(px_lo - 8)}" y="{_fmt(gy + 4)}" '
            'text-anchor="end" font-family="sans-serif" font-size="11">'
            f"{_fmt_tick(vy)}</text>"
        )
    if plot.xlabel:
        parts.append(
            f'<text x="{_fmt((px_lo + px_hi) / 2)}" '
            f'y="{_fmt(_HEIGHT - 10)}" text-anchor="middle" '
            'font-family="sans-serif" font-size="13">'
            f"{_escape(plot.xlabel)}</text>"
        )
    if plot.ylabel:
        parts.append(
            f'<text x="18.00" y="{_fmt((py_lo + py_hi) / 2)}" '
            'text-anchor="middle" font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 18.00 {_fmt((py_lo + py_hi) / 2)})">'
            f"{_escape(plot.ylabel)}</text>"
        )
    # data
    if plot.kind == "bar":
        n_series = len(plot.series)
        for si, s in enumerate(plot.series):
            color = _PALETTE[si % len(_PALETTE)]
            slot = (px_hi - px_lo) / s.x.size
            bar_w = slot * 0.8 / n_series
            for xi in range(s.x.size):
                bx = px_lo + slot * (xi + 0.1) + bar_w * si
                y_top = sy(max(s.y[xi], 0.0))
                y_bot = sy(min(s.y[xi], 0.0))
                parts.append(
                    f'<rect x="{_fmt(bx)}" y="{_fmt(y_top)}" '
                    f'width="{_fmt(bar_w)}" '
                    f'height="{_fmt(max(y_bot - y_top, 0.0))}" '
                    f'fill="{color}"/>'
                )
    else:
        for si, s in enumerate(plot.series):
            color = _PALETTE[si % len(_PALETTE)]
            coords = [
                f"{'M' if i == 0 else 'L'} {_fmt(sx(float(s.x[i])))} "
                f"{_fmt(sy(float(s.y[i])))}"
                for i in range(s.x.size)
            ]
            parts.append(
                f'<path d="{" ".join(coords)}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
    # legend
    for si, s in enumerate(plot.series):
        color = _PALETTE[si % len(_PALETTE)]
        ly = _MARGIN_TOP + 8 + 18 * si
        parts.append(
            f'<rect x="{_fmt(px_hi - 150)}" y="{_fmt(ly)}" width="12.00" '
            f'height="12.00" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_fmt(px_hi - 132)}" y="{_fmt(ly + 10)}" '
            'font-family="sans-serif" font-size="12">'
            f"{_escape(s.name)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_svg(plot: PlotSpec, path) -> None:
    """Write a PlotSpec to disk as a standalone SVG file."""
    svg = render_svg(plot)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
