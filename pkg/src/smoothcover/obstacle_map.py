"""Occupancy grid and exact Euclidean distance field for circular obstacles.

Cells are indexed ``[ix, iy]`` with the center of cell ``(0, 0)`` sitting on
``(x_min, y_min)``.  Distances are metric (cell distance times ``step``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class OutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class WorldBounds:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate world bounds {self}")

    def contains(self, point, tol: float = 0.0) -> bool:
        x, y = float(point[0]), float(point[1])
        return (self.x_min - tol <= x <= self.x_max + tol
                and self.y_min - tol <= y <= self.y_max + tol)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    cells: np.ndarray  # bool, shape (nx, ny)
    step: float
    origin: tuple[float, float]
    bounds: WorldBounds

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + ix * self.step, self.origin[1] + iy * self.step)


@dataclass(frozen=True, eq=False)
class DistanceField:
    distances: np.ndarray  # meters, shape (nx, ny)
    step: float
    origin: tuple[float, float]
    bounds: WorldBounds
    sentinel: float = field(default=math.inf)

    @property
    def shape(self) -> tuple[int, int]:
        return self.distances.shape

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside the world bounds."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        b = self.bounds
        eps = 1e-9 * max(b.width, b.height)
        return ((p[:, 0] >= b.x_min - eps) & (p[:, 0] <= b.x_max + eps)
                & (p[:, 1] >= b.y_min - eps) & (p[:, 1] <= b.y_max + eps))

    def sample(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bilinear distance and its exact gradient at many points.

        Returns ``(distance, gradient, outside)`` where ``gradient`` has shape
        (n, 2).  Points outside the bounds get distance 0 and zero gradient.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        finite = np.isfinite(p).all(axis=1)
        if not finite.all():
            # non-finite points yield NaN distances so callers can name the culprit
            p = np.where(finite[:, None], p, np.array(self.origin))
        d = self.distances
        nx, ny = d.shape
        fx = (p[:, 0] - self.origin[0]) / self.step
        fy = (p[:, 1] - self.origin[1]) / self.step
        fx = _snap(fx)
        fy = _snap(fy)
        # beyond the last cell center the field is held constant along that axis
        clamped_x = (fx < 0) | (fx > nx - 1)
        clamped_y = (fy < 0) | (fy > ny - 1)
        fx = np.clip(fx, 0, nx - 1)
        fy = np.clip(fy, 0, ny - 1)
        i0 = np.minimum(np.floor(fx).astype(int), max(nx - 2, 0))
        j0 = np.minimum(np.floor(fy).astype(int), max(ny - 2, 0))
        i1 = np.minimum(i0 + 1, nx - 1)
        j1 = np.minimum(j0 + 1, ny - 1)
        tx = fx - i0
        ty = fy - j0
        d00 = d[i0, j0]
        d10 = d[i1, j0]
        d01 = d[i0, j1]
        d11 = d[i1, j1]
        val = ((1 - tx) * (1 - ty) * d00 + tx * (1 - ty) * d10
               + (1 - tx) * ty * d01 + tx * ty * d11)
        gx = ((1 - ty) * (d10 - d00) + ty * (d11 - d01)) / self.step
        gy = ((1 - tx) * (d01 - d00) + tx * (d11 - d10)) / self.step
        gx = np.where(clamped_x | (nx == 1), 0.0, gx)
        gy = np.where(clamped_y | (ny == 1), 0.0, gy)
        outside = ~self.contains(p)
        val = np.where(outside, 0.0, val)
        grad = np.where(outside[:, None], 0.0, np.stack([gx, gy], axis=1))
        val = np.where(finite, val, np.nan)
        grad = np.where(finite[:, None], grad, np.nan)
        return val, grad, outside

    def to_csv(self, path) -> None:
        """One line per grid row (constant y), columns ordered by x."""
        with open(path, "w") as fh:
            for iy in range(self.distances.shape[1]):
                fh.write(",".join(f"{v:.6f}" for v in self.distances[:, iy]))
                fh.write("\n")


def _snap(f: np.ndarray) -> np.ndarray:
    r = np.round(f)
    return np.where(np.abs(f - r) < 1e-9, r, f)


def grid_shape(bounds: WorldBounds, step: float) -> tuple[int, int]:
    nx = max(1, math.ceil(bounds.width / step - 1e-9))
    ny = max(1, math.ceil(bounds.height / step - 1e-9))
    return nx, ny


def _round_half_up(v: float) -> int:
    # tolerance absorbs representation error such as 0.25 / 0.1 = 2.4999...
    return math.floor(v + 0.5 + 1e-9)


def pos2grid(position, grid: OccupancyGrid | DistanceField) -> tuple[int, int]:
    """World position to the nearest cell index, clamped to the grid.

    Positions more than one cell outside the world bounds raise
    :class:`OutOfBoundsError`.
    """
    x, y = float(position[0]), float(position[1])
    b = grid.bounds
    lam = grid.step
    for name, v, lo, hi in (("x", x, b.x_min, b.x_max), ("y", y, b.y_min, b.y_max)):
        if v < lo - lam or v > hi + lam:
            raise OutOfBoundsError(f"{name}={v} lies outside [{lo}, {hi}] by more than one cell")
    nx, ny = grid.shape
    ix = _round_half_up((x - grid.origin[0]) / lam)
    iy = _round_half_up((y - grid.origin[1]) / lam)
    return min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1)


def build_occupancy(obstacles: Iterable[Obstacle], bounds: WorldBounds, step: float) -> OccupancyGrid:
    """Stamp each obstacle disk into a boolean grid.

    A cell is occupied when its center is within ``radius`` of an obstacle
    center.  Obstacles may hang over the world edge; only in-bounds cells
    are written.
    """
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step}")
    nx, ny = grid_shape(bounds, step)
    cells = np.zeros((nx, ny), dtype=bool)
    ox, oy = bounds.x_min, bounds.y_min
    for obs in obstacles:
        cx, cy = obs.center
        r = obs.radius
        i_lo = max(0, math.floor((cx - r - ox) / step))
        i_hi = min(nx - 1, math.ceil((cx + r - ox) / step))
        j_lo = max(0, math.floor((cy - r - oy) / step))
        j_hi = min(ny - 1, math.ceil((cy + r - oy) / step))
        if i_lo > i_hi or j_lo > j_hi:
            continue
        xs = ox + np.arange(i_lo, i_hi + 1) * step
        ys = oy + np.arange(j_lo, j_hi + 1) * step
        inside = (xs[:, None] - cx) ** 2 + (ys[None, :] - cy) ** 2 <= r * r
        cells[i_lo:i_hi + 1, j_lo:j_hi + 1] |= inside
    return OccupancyGrid(cells=cells, step=float(step), origin=(ox, oy), bounds=bounds)


def _lower_envelope(g: np.ndarray) -> np.ndarray:
    """1D squared distance transform of sampled function ``g`` (inf allowed)."""
    n = g.shape[0]
    out = np.full(n, np.inf)
    sites = np.flatnonzero(np.isfinite(g))
    if sites.size == 0:
        return out
    v = np.empty(sites.size, dtype=np.int64)
    z = np.empty(sites.size + 1)
    k = 0
    v[0] = sites[0]
    z[0] = -np.inf
    z[1] = np.inf
    for q in sites[1:]:
        fq = g[q] + q * q
        while True:
            p = v[k]
            s = (fq - (g[p] + p * p)) / (2 * q - 2 * p)
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + g[p]
    return out


def squared_cell_distance(cells: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean cell distance to the nearest occupied cell.

    Two separable passes: a linear scan along y, then a lower-envelope of
    parabolas along x.  Values are integers stored as float; ``inf`` when the
    grid has no occupied cell.
    """
    nx, ny = cells.shape
    big = nx + ny + 1
    col = np.where(cells[:, 0], 0, big).astype(np.int64)
    dist = np.empty((nx, ny), dtype=np.int64)
    dist[:, 0] = col
    for j in range(1, ny):
        col = np.where(cells[:, j], 0, col + 1)
        dist[:, j] = col
    for j in range(ny - 2, -1, -1):
        dist[:, j] = np.minimum(dist[:, j], dist[:, j + 1] + 1)
    g = dist.astype(float) ** 2
    g[dist >= big] = np.inf
    out = np.empty((nx, ny))
    for j in range(ny):
        out[:, j] = _lower_envelope(g[:, j])
    return out


def compute_edt(grid: OccupancyGrid) -> DistanceField:
    """Metric distance from every cell to the nearest occupied cell.

    Obstacle-free grids are filled with the grid diagonal length.
    """
    nx, ny = grid.shape
    sentinel = grid.step * math.hypot(nx, ny)
    if not grid.cells.any():
        dist = np.full((nx, ny), sentinel)
    else:
        dist = np.sqrt(squared_cell_distance(grid.cells)) * grid.step
    dist.setflags(write=False)
    return DistanceField(distances=dist, step=grid.step, origin=grid.origin,
                         bounds=grid.bounds, sentinel=sentinel)


def query_distance(field: DistanceField, position: Sequence[float]) -> float:
    """Bilinearly interpolated clearance at ``position``.

    Positions outside the world bounds return 0.0, the most unsafe value;
    :meth:`DistanceField.contains` tells such points apart.
    """
    val, _, _ = field.sample(np.asarray(position, dtype=float)[None, :])
    return float(val[0])


def query_gradient(field: DistanceField, position: Sequence[float]) -> tuple[np.ndarray, bool]:
    """Gradient of :func:`query_distance` and a flag set near the grid border.

    The gradient is the exact derivative of the bilinear interpolant.  Within
    one cell of the border the field is clamped, so the component normal to
    that border degenerates to a one-sided value and the flag is raised.
    """
    p = np.asarray(position, dtype=float)
    _, grad, _ = field.sample(p[None, :])
    nx, ny = field.shape
    fx = (p[0] - field.origin[0]) / field.step
    fy = (p[1] - field.origin[1]) / field.step
    near_border = fx < 1 or fy < 1 or fx > nx - 2 or fy > ny - 2
    return grad[0], bool(near_border)
