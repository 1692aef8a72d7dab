"""Deterministic SVG rendering: per-group scatter layers and filled HDR bands.

Everything is assembled as text with fixed-precision coordinates, so the
same inputs and seed always produce byte-identical documents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .density import DEFAULT_QUANTILES, DensityGrid, contour_levels
from .quantify import BBox
from .tsne import Embedding2D

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


class RenderError(ValueError):
    pass


@dataclass
class RenderOptions:
    mode: str = "both"              # scatter | contour | both
    width: int = 860
    height: int = 640
    point_size: float = 3.0
    per_cell: bool = False          # one mark per cell instead of per signature
    jitter_radius: float = 0.0      # data units, per-cell mode
    seed: int = 0
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES

    def __post_init__(self):
        if self.mode not in ("scatter", "contour", "both"):
            raise RenderError(f"unknown mode {self.mode!r}")


@dataclass
class _View:
    """Affine map from embedding coordinates to SVG pixels (y flipped)."""

    x0: float
    y0: float
    sx: float
    sy: float
    height_px: float
    margin: tuple[float, float, float, float]  # left, top, right, bottom

    def px(self, x: float) -> float:
        return self.margin[0] + (x - self.x0) * self.sx

    def py(self, y: float) -> float:
        return self.margin[1] + self.height_px - (y - self.y0) * self.sy


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _make_view(xlim, ylim, options: RenderOptions) -> _View:
    margin = (46.0, 18.0, 150.0, 34.0)
    inner_w = options.width - margin[0] - margin[2]
    inner_h = options.height - margin[1] - margin[3]
    span_x = max(xlim[1] - xlim[0], 1e-12)
    span_y = max(ylim[1] - ylim[0], 1e-12)
    return _View(x0=xlim[0], y0=ylim[0], sx=inner_w / span_x,
                 sy=inner_h / span_y, height_px=inner_h, margin=margin)


def _contour_layer(grid: DensityGrid, color: str, view: _View,
                   quantiles) -> str:
    thresholds = np.array(contour_levels(grid, quantiles))
    # band index per cell: how many thresholds the density reaches
    bands = np.searchsorted(thresholds, grid.values, side="right")
    n_bands = thresholds.size
    parts = [f'  <g class="contour" data-group={quoteattr(grid.group)}>\n']
    x0, y0 = grid.origin
    dx, dy = grid.cell_size
    for iy in range(grid.ny):
        row = bands[iy]
        ix = 0
        while ix < grid.nx:
            b = row[ix]
            if b == 0:
                ix += 1
                continue
            run = ix
            while run < grid.nx and row[run] == b:
                run += 1
            px0 = view.px(x0 + ix * dx)
            px1 = view.px(x0 + run * dx)
            py0 = view.py(y0 + (iy + 1) * dy)
            py1 = view.py(y0 + iy * dy)
            opacity = 0.10 + 0.55 * (b / n_bands)
            parts.append(
                f'    <rect x="{_fmt(px0)}" y="{_fmt(py0)}" '
                f'width="{_fmt(px1 - px0)}" height="{_fmt(py1 - py0)}" '
                f'fill="{color}" fill-opacity="{opacity:.3f}"/>\n')
            ix = run
    parts.append("  </g>\n")
    return "".join(parts)


def _scatter_layer(emb: Embedding2D, gi: int, color: str, view: _View,
                   options: RenderOptions, rng: np.random.Generator) -> str:
    weights = emb.weights[:, gi]
    active = np.nonzero(weights > 0)[0]
    parts = [f'  <g class="scatter" data-group={quoteattr(emb.groups[gi])}>\n']
    if active.size == 0:
        parts.append("  </g>\n")
        return "".join(parts)
    if options.per_cell:
        for i in active:
            w = int(weights[i])
            r = options.jitter_radius * np.sqrt(rng.uniform(0.0, 1.0, w))
            ang = rng.uniform(0.0, 2.0 * np.pi, w)
            xs = emb.coords[i, 0] + r * np.cos(ang)
            ys = emb.coords[i, 1] + r * np.sin(ang)
            for x, y in zip(xs, ys):
                parts.append(
                    f'    <circle cx="{_fmt(view.px(x))}" cy="{_fmt(view.py(y))}" '
                    f'r="{_fmt(options.point_size * 0.5)}" fill="{color}" '
                    f'fill-opacity="0.55" class="mark"/>\n')
    else:
        wmax = max(float(weights[active].max()), 1.0)
        for i in active:
            r = options.point_size * (0.4 + np.sqrt(weights[i] / wmax))
            parts.append(
                f'    <circle cx="{_fmt(view.px(emb.coords[i, 0]))}" '
                f'cy="{_fmt(view.py(emb.coords[i, 1]))}" r="{_fmt(r)}" '
                f'fill="{color}" fill-opacity="0.65" class="mark"/>\n')
    parts.append("  </g>\n")
    return "".join(parts)


def render_svg(emb: Embedding2D, grids: Sequence[DensityGrid] = (),
               options: RenderOptions | None = None,
               bboxes: Sequence[BBox] = ()) -> str:
    """Render the embedding (and optional per-group density grids) to SVG."""
    options = options or RenderOptions()
    if len(emb) == 0:
        raise RenderError("empty embedding")
    rng = np.random.default_rng(options.seed)

    xs, ys = emb.coords[:, 0], emb.coords[:, 1]
    xlim = [float(xs.min()), float(xs.max())]
    ylim = [float(ys.min()), float(ys.max())]
    for g in grids:
        xlim[0] = min(xlim[0], g.origin[0])
        xlim[1] = max(xlim[1], g.origin[0] + g.nx * g.cell_size[0])
        ylim[0] = min(ylim[0], g.origin[1])
        ylim[1] = max(ylim[1], g.origin[1] + g.ny * g.cell_size[1])
    pad_x = 0.05 * max(xlim[1] - xlim[0], 1e-12)
    pad_y = 0.05 * max(ylim[1] - ylim[0], 1e-12)
    xlim = (xlim[0] - pad_x, xlim[1] + pad_x)
    ylim = (ylim[0] - pad_y, ylim[1] + pad_y)
    view = _make_view(xlim, ylim, options)

    color_of = {g: PALETTE[i % len(PALETTE)] for i, g in enumerate(emb.groups)}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{options.width}" '
        f'height="{options.height}" viewBox="0 0 {options.width} {options.height}">\n',
        f'  <rect width="{options.width}" height="{options.height}" fill="white"/>\n',
    ]
    if options.mode in ("contour", "both"):
        for g in grids:
            color = color_of.get(g.group, PALETTE[-1])
            parts.append(_contour_layer(g, color, view, options.quantiles))
    if options.mode in ("scatter", "both"):
        for gi in range(len(emb.groups)):
            parts.append(_scatter_layer(emb, gi, color_of[emb.groups[gi]],
                                        view, options, rng))
    for j, bb in enumerate(bboxes):
        x = view.px(bb.xmin)
        y = view.py(bb.ymax)
        parts.append(
            f'  <g class="roi"><rect x="{_fmt(x)}" y="{_fmt(y)}" '
            f'width="{_fmt(view.px(bb.xmax) - x)}" height="{_fmt(view.py(bb.ymin) - y)}" '
            f'fill="none" stroke="#222222" stroke-width="1.5" stroke-dasharray="5,3"/>'
            f'<text x="{_fmt(x + 3)}" y="{_fmt(y - 4)}" font-size="11" '
            f'fill="#222222">ROI {j + 1}</text></g>\n')

    # legend
    lx = options.width - view.margin[2] + 12
    parts.append('  <g class="legend" font-size="12" font-family="sans-serif">\n')
    for i, g in enumerate(emb.groups):
        ly = view.margin[1] + 14 + 18 * i
        parts.append(
            f'    <rect x="{_fmt(lx)}" y="{_fmt(ly - 9)}" width="11" height="11" '
            f'fill="{color_of[g]}"/>'
            f'<text x="{_fmt(lx + 16)}" y="{_fmt(ly + 1)}">{escape(g)}</text>\n')
    parts.append("  </g>\n")

    # axes box and extent labels
    left, top = view.margin[0], view.margin[1]
    parts.append(
        f'  <rect x="{_fmt(left)}" y="{_fmt(top)}" '
        f'width="{_fmt(options.width - view.margin[2] - left)}" '
        f'height="{_fmt(view.height_px)}" fill="none" stroke="#999999"/>\n')
    parts.append(
        f'  <text x="{_fmt(left)}" y="{_fmt(top + view.height_px + 16)}" '
        f'font-size="10" fill="#555555">x: [{xlim[0]:.3g}, {xlim[1]:.3g}]  '
        f'y: [{ylim[0]:.3g}, {ylim[1]:.3g}]</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)
