"""Weighted 2-D Gaussian KDE rasterized to a grid, with HDR contour levels.

The kernel is diagonal (per-axis bandwidth); Scott's rule uses the weighted
effective sample size n_eff = (sum w)^2 / sum w^2 so multiplicity weights
behave like repeated points. The grid covers the data's bounding box padded
by three bandwidths, which keeps the rasterized mass within 1% of 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

DEFAULT_GRID = (512, 512)
DEFAULT_QUANTILES = tuple(round(0.1 * i, 1) for i in range(1, 10))
PAD_BANDWIDTHS = 3.0


class DensityError(ValueError):
    pass


@dataclass(frozen=True)
class ContourSpec:
    """Mass quantiles at which to place highest-density-region thresholds."""

    quantiles: tuple[float, ...] = DEFAULT_QUANTILES

    def __post_init__(self):
        qs = self.quantiles
        if not qs or any(not 0 < q < 1 for q in qs):
            raise DensityError("quantiles must lie in (0, 1)")
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise DensityError("quantiles must be strictly increasing")


@dataclass
class DensityGrid:
    """Raster of density values (per unit area) for one cohort group."""

    group: str
    origin: tuple[float, float]       # lower-left corner
    cell_size: tuple[float, float]    # (dx, dy)
    values: np.ndarray                # (ny, nx), row iy
    bandwidth: tuple[float, float]
    n_eff: float
    warnings: list[str] = field(default_factory=list)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size[0]

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size[1]

    def mass(self) -> float:
        return float(self.values.sum() * self.cell_size[0] * self.cell_size[1])


def _weighted_moments(points: np.ndarray, weights: np.ndarray):
    wsum = weights.sum()
    mean = (weights @ points) / wsum
    var = (weights @ (points - mean) ** 2) / wsum
    return mean, var


def scott_bandwidth(points: np.ndarray, weights: np.ndarray):
    """Per-axis Scott bandwidth h_d = sigma_d * n_eff^(-1/6).

    Returns (hx, hy, n_eff, warnings). A zero-variance axis falls back to
    1% of the other axis's bandwidth (or 1.0 if both degenerate).
    """
    wsum = float(weights.sum())
    n_eff = wsum * wsum / float((weights.astype(np.float64) ** 2).sum())
    _, var = _weighted_moments(points, weights)
    h = np.sqrt(var) * n_eff ** (-1.0 / 6.0)
    warnings = []
    if h[0] == 0.0 or h[1] == 0.0:
        if h[0] == 0.0 and h[1] == 0.0:
            h = np.array([1.0, 1.0])
            warnings.append("both axes degenerate under Scott's rule; bandwidth set to 1.0")
        elif h[0] == 0.0:
            h[0] = 0.01 * h[1]
            warnings.append("x axis degenerate under Scott's rule; hx set to 0.01*hy")
        else:
            h[1] = 0.01 * h[0]
            warnings.append("y axis degenerate under Scott's rule; hy set to 0.01*hx")
    return float(h[0]), float(h[1]), n_eff, warnings


def _check_inputs(points, weights):
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise DensityError("points must have shape (n, 2)")
    if weights.shape != (points.shape[0],):
        raise DensityError("weights must align with points")
    if (weights < 0).any():
        raise DensityError("weights must be non-negative")
    if weights.sum() <= 0:
        raise DensityError("zero total weight")
    return points, weights


def kde_fit(points, weights, bandwidth="scott",
            grid_size: tuple[int, int] = DEFAULT_GRID,
            group: str = "") -> DensityGrid:
    """Fit the weighted KDE and evaluate it at grid cell centers.

    ``bandwidth`` is "scott" or a fixed (hx, hy) pair. The Gaussian kernel
    factorizes per axis, so the raster is two kernel matrices and one
    matrix product.
    """
    points, weights = _check_inputs(points, weights)
    warnings: list[str] = []
    if bandwidth == "scott":
        hx, hy, n_eff, warnings = scott_bandwidth(points, weights)
    else:
        hx, hy = float(bandwidth[0]), float(bandwidth[1])
        if hx <= 0 or hy <= 0:
            raise DensityError("fixed bandwidth must be positive")
        wsum = float(weights.sum())
        n_eff = wsum * wsum / float((weights ** 2).sum())
    nx, ny = int(grid_size[0]), int(grid_size[1])
    if nx < 2 or ny < 2:
        raise DensityError("grid must be at least 2x2")

    pad = PAD_BANDWIDTHS * max(hx, hy)
    x0 = float(points[:, 0].min()) - pad
    x1 = float(points[:, 0].max()) + pad
    y0 = float(points[:, 1].min()) - pad
    y1 = float(points[:, 1].max()) + pad
    dx = (x1 - x0) / nx
    dy = (y1 - y0) / ny
    xc = x0 + (np.arange(nx) + 0.5) * dx
    yc = y0 + (np.arange(ny) + 0.5) * dy

    # separable kernel: density = Ky^T (w * Kx) / sum(w)
    kx = np.exp(-0.5 * ((xc[None, :] - points[:, 0][:, None]) / hx) ** 2)
    kx /= hx * math.sqrt(2.0 * math.pi)
    ky = np.exp(-0.5 * ((yc[None, :] - points[:, 1][:, None]) / hy) ** 2)
    ky /= hy * math.sqrt(2.0 * math.pi)
    values = ky.T @ (weights[:, None] * kx)
    values /= weights.sum()

    grid = DensityGrid(group=group, origin=(x0, y0), cell_size=(dx, dy),
                       values=values, bandwidth=(hx, hy), n_eff=n_eff,
                       warnings=warnings)
    mass = grid.mass()
    if not 0.99 <= mass <= 1.01:
        grid.warnings.append(
            f"grid mass {mass:.4f} outside [0.99, 1.01]; "
            "bandwidth may be small relative to the grid resolution")
    return grid


def evaluate_density(points, weights, bandwidth: tuple[float, float],
                     query: tuple[float, float]) -> float:
    """Exact weighted kernel sum at one query point (no grid interpolation)."""
    points, weights = _check_inputs(points, weights)
    hx, hy = float(bandwidth[0]), float(bandwidth[1])
    dx = (query[0] - points[:, 0]) / hx
    dy = (query[1] - points[:, 1]) / hy
    kern = np.exp(-0.5 * (dx ** 2 + dy ** 2)) / (2.0 * math.pi * hx * hy)
    return float((weights * kern).sum() / weights.sum())


def contour_levels(grid: DensityGrid,
                   spec: ContourSpec | Sequence[float] = DEFAULT_QUANTILES) -> list[float]:
    """Highest-density-region thresholds for the given mass quantiles.

    The threshold for quantile q is the smallest grid density t such that
    cells with density >= t hold at least (1 - q) of the grid's mass.
    """
    if not isinstance(spec, ContourSpec):
        spec = ContourSpec(tuple(spec))
    flat = grid.values.ravel()
    order = np.argsort(flat)[::-1]
    sorted_d = flat[order]
    cell_area = grid.cell_size[0] * grid.cell_size[1]
    cum_mass = np.cumsum(sorted_d) * cell_area
    total = cum_mass[-1]
    thresholds = []
    for q in spec.quantiles:
        target = (1.0 - q) * total
        j = int(np.searchsorted(cum_mass, target, side="left"))
        j = min(j, sorted_d.size - 1)
        thresholds.append(float(sorted_d[j]))
    return thresholds


# --- serialization ---------------------------------------------------------

def write_density_csv(grid: DensityGrid, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_density_csv(grid, fh)
        return
    stream.write("x_index,y_index,density\n")
    for iy in range(grid.ny):
        row = grid.values[iy].tolist()
        stream.writelines(f"{ix},{iy},{v!r}\n" for ix, v in enumerate(row))


def write_density_json(grid: DensityGrid, stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_density_json(grid, fh)
        return
    json.dump({
        "schema_version": 1,
        "group": grid.group,
        "origin": list(grid.origin),
        "cell_size": list(grid.cell_size),
        "nx": grid.nx,
        "ny": grid.ny,
        "bandwidth": list(grid.bandwidth),
        "n_eff": grid.n_eff,
        "warnings": grid.warnings,
    }, stream, indent=2)
    stream.write("\n")


def read_density(csv_path: str, json_path: str) -> DensityGrid:
    with open(json_path, "r", encoding="utf-8") as fh:
        head = json.load(fh)
    values = np.zeros((head["ny"], head["nx"]))
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x_index", "y_index", "density"]:
            raise DensityError(f"bad density header: {header}")
        for row in reader:
            if row:
                values[int(row[1]), int(row[0])] = float(row[2])
    return DensityGrid(
        group=head["group"],
        origin=tuple(head["origin"]),
        cell_size=tuple(head["cell_size"]),
        values=values,
        bandwidth=tuple(head["bandwidth"]),
        n_eff=head["n_eff"],
        warnings=list(head.get("warnings", [])),
    )


def write_contours_json(group: str, quantiles: Sequence[float],
                        thresholds: Sequence[float], stream: TextIO | str) -> None:
    if isinstance(stream, str):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            write_contours_json(group, quantiles, thresholds, fh)
        return
    json.dump({
        "schema_version": 1,
        "group": group,
        "quantiles": list(quantiles),
        "thresholds": [float(t) for t in thresholds],
    }, stream, indent=2)
    stream.write("\n")
