"""Regions, point patterns, covariate fields and quadrature grids.

Everything here is immutable once built.  Coordinates are plain floats in
the units of the observation window; the default window is the unit square.

Cell indexing (rasters and quadrature grids alike) is row-major starting
from the minimum-y row, and a location lying exactly on an interior cell
edge belongs to the cell with the larger index.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "Region",
    "UNIT_SQUARE",
    "PointPattern",
    "AnalyticField",
    "RasterField",
    "CovariateField",
    "QuadratureGrid",
    "coord_x",
    "coord_y",
    "product_xy",
    "square_x",
    "distance_to",
    "covariate_at",
    "design_row",
    "design_matrix",
    "count_in_cells",
    "read_points_csv",
    "write_points_csv",
    "read_raster",
    "write_raster",
]

# relative slack for snapping a coordinate onto a cell edge
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigurationError(f"region bounds must be finite, got {vals}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError(f"degenerate region {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, xy) -> np.ndarray:
        """Boundary-inclusive containment test for an (n, 2) array."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (
            (xy[:, 0] >= self.xmin)
            & (xy[:, 0] <= self.xmax)
            & (xy[:, 1] >= self.ymin)
            & (xy[:, 1] <= self.ymax)
        )

    def matches(self, other: "Region") -> bool:
        a = np.array([self.xmin, self.xmax, self.ymin, self.ymax])
        b = np.array([other.xmin, other.xmax, other.ymin, other.ymax])
        scale = max(self.width, self.height, other.width, other.height)
        return bool(np.all(np.abs(a - b) <= 1e-12 * scale))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)


UNIT_SQUARE = Region()


def _as_points(points) -> np.ndarray:
    xy = np.asarray(points, dtype=float)
    if xy.size == 0:
        return np.empty((0, 2))
    xy = np.atleast_2d(xy)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ConfigurationError(f"points must have shape (k, 2), got {xy.shape}")
    return xy


def _cell_index_1d(t: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    """Index of the 1-d cell holding each coordinate; edges go to the upper cell."""
    u = (t - lo) / (hi - lo) * n
    r = np.rint(u)
    on_edge = np.abs(u - r) <= _EDGE_TOL * max(n, 1)
    idx = np.where(on_edge, r, np.floor(u)).astype(np.int64)
    return np.clip(idx, 0, n - 1)


@dataclass(frozen=True)
class PointPattern:
    """Event locations observed in a rectangular window."""

    points: np.ndarray
    region: Region = UNIT_SQUARE

    def __post_init__(self):
        xy = _as_points(self.points)
        inside = self.region.contains(xy) if len(xy) else np.ones(0, bool)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise DomainError(
                f"point {bad} at {tuple(xy[bad])} lies outside region {self.region.as_tuple()}"
            )
        xy = xy.copy()
        xy.setflags(write=False)
        object.__setattr__(self, "points", xy)

    @property
    def k(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return self.k

    def subset(self, index) -> "PointPattern":
        return PointPattern(self.points[np.asarray(index)], self.region)


@dataclass(frozen=True)
class AnalyticField:
    """Covariate given by a closed-form function of location.

    ``kind`` is one of ``"x"``, ``"y"``, ``"xy"``, ``"x2"`` or ``"dist"``;
    the last needs ``center``.
    """

    kind: str
    name: str = ""
    center: tuple[float, float] | None = None

    KINDS = ("x", "y", "xy", "x2", "dist")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown analytic covariate kind {self.kind!r}")
        if self.kind == "dist":
            if self.center is None or len(self.center) != 2:
                raise ConfigurationError("distance covariate needs a (cx, cy) center")
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind == "dist":
            return f"dist({self.center[0]:g},{self.center[1]:g})"
        return self.kind

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_points(xy)
        x, y = xy[:, 0], xy[:, 1]
        if self.kind == "x":
            return x.copy()
        if self.kind == "y":
            return y.copy()
        if self.kind == "xy":
            return x * y
        if self.kind == "x2":
            return x * x
        cx, cy = self.center
        return np.hypot(x - cx, y - cy)


@dataclass(frozen=True, eq=False)
class RasterField:
    """Gridded covariate looked up by the cell containing a location."""

    nx: int
    ny: int
    region: Region
    values: np.ndarray
    name: str = "raster"

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError(f"raster shape must be positive, got {self.nx}x{self.ny}")
        vals = np.asarray(self.values, dtype=float).ravel()
        if vals.size != self.nx * self.ny:
            raise ConfigurationError(
                f"raster needs {self.nx * self.ny} values, got {vals.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError(f"raster {self.name!r} has non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def cell_of(self, xy) -> np.ndarray:
        xy = _as_points(xy)
        r = self.region
        ix = _cell_index_1d(xy[:, 0], r.xmin, r.xmax, self.nx)
        iy = _cell_index_1d(xy[:, 1], r.ymin, r.ymax, self.ny)
        return iy * self.nx + ix

    def evaluate(self, xy) -> np.ndarray:
        xy = _as_points(xy)
        outside = ~self.region.contains(xy)
        if np.any(outside):
            bad = int(np.flatnonzero(outside)[0])
            raise DomainError(
                f"raster {self.name!r} queried at {tuple(xy[bad])}, outside {self.region.as_tuple()}"
            )
        return self.values[self.cell_of(xy)]

    def as_grid(self) -> np.ndarray:
        """Values as an (ny, nx) array, row 0 at minimum y."""
        return self.values.reshape(self.ny, self.nx)


CovariateField = AnalyticField | RasterField


def coord_x(name: str = "x") -> AnalyticField:
    return AnalyticField("x", name)


def coord_y(name: str = "y") -> AnalyticField:
    return AnalyticField("y", name)


def product_xy(name: str = "xy") -> AnalyticField:
    return AnalyticField("xy", name)


def square_x(name: str = "x2") -> AnalyticField:
    return AnalyticField("x2", name)


def distance_to(cx: float, cy: float, name: str = "") -> AnalyticField:
    return AnalyticField("dist", name, (cx, cy))


def covariate_at(field: CovariateField, s, region: Region | None = None) -> float:
    """Value of one covariate at a single location.

    Analytic fields are defined everywhere; pass ``region`` to enforce the
    window check for them too.  Rasters always check against their own region.
    """
    xy = _as_points(s)
    if len(xy) != 1:
        raise ConfigurationError("covariate_at takes a single location")
    if region is not None and not region.contains(xy)[0]:
        raise DomainError(f"location {tuple(xy[0])} outside region {region.as_tuple()}")
    return float(field.evaluate(xy)[0])


def design_matrix(fields: Sequence[CovariateField], xy) -> np.ndarray:
    """Stack covariates column-wise: shape (n, len(fields))."""
    xy = _as_points(xy)
    if not fields:
        return np.empty((len(xy), 0))
    return np.column_stack([f.evaluate(xy) for f in fields])


def design_row(fields: Sequence[CovariateField], s) -> np.ndarray:
    return design_matrix(fields, s)[0]


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform nx-by-ny partition of a region into equal-area cells."""

    nx: int = 100
    ny: int = 100
    region: Region = UNIT_SQUARE
    _centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ConfigurationError(f"grid shape must be positive, got {self.nx}x{self.ny}")
        r = self.region
        xc = r.xmin + (np.arange(self.nx) + 0.5) * (r.width / self.nx)
        yc = r.ymin + (np.arange(self.ny) + 0.5) * (r.height / self.ny)
        gx, gy = np.meshgrid(xc, yc)
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        centers.setflags(write=False)
        object.__setattr__(self, "_centers", centers)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.region.area / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    def cell_of(self, xy) -> np.ndarray:
        xy = _as_points(xy)
        r = self.region
        ix = _cell_index_1d(xy[:, 0], r.xmin, r.xmax, self.nx)
        iy = _cell_index_1d(xy[:, 1], r.ymin, r.ymax, self.ny)
        return iy * self.nx + ix

    def cell_bounds(self, index: int) -> tuple[float, float, float, float]:
        iy, ix = divmod(int(index), self.nx)
        r = self.region
        dx, dy = r.width / self.nx, r.height / self.ny
        return (r.xmin + ix * dx, r.xmin + (ix + 1) * dx, r.ymin + iy * dy, r.ymin + (iy + 1) * dy)


def count_in_cells(pattern: PointPattern, grid: QuadratureGrid) -> np.ndarray:
    """Number of events per grid cell, row-major."""
    if not pattern.region.matches(grid.region):
        raise ConfigurationError(
            f"pattern region {pattern.region.as_tuple()} differs from grid region "
            f"{grid.region.as_tuple()}"
        )
    if pattern.k == 0:
        return np.zeros(grid.n_cells, dtype=np.int64)
    return np.bincount(grid.cell_of(pattern.points), minlength=grid.n_cells)


# ---------------------------------------------------------------- file formats


def read_points_csv(path, region: Region = UNIT_SQUARE) -> PointPattern:
    """Read a ``x,y`` header CSV into a pattern."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: expected header with columns x,y")
        rows = [(float(r["x"]), float(r["y"])) for r in reader]
    return PointPattern(np.array(rows, dtype=float).reshape(-1, 2), region)


def write_points_csv(pattern: PointPattern, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in pattern.points:
            w.writerow([repr(float(x)), repr(float(y))])


def read_raster(path, name: str | None = None) -> RasterField:
    """Read the plain-text raster format.

    First line: ``nx ny xmin xmax ymin ymax``; then nx*ny whitespace
    separated values, row-major from the minimum-y row upward.
    """
    path = Path(path)
    tokens = path.read_text().split()
    if len(tokens) < 6:
        raise ConfigurationError(f"{path}: raster header needs 6 fields")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
        bounds = [float(t) for t in tokens[2:6]]
        values = np.array([float(t) for t in tokens[6:]])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed raster ({exc})") from None
    return RasterField(nx, ny, Region(*bounds), values, name or path.stem)


def write_raster(raster: RasterField, path) -> None:
    r = raster.region
    lines = [f"{raster.nx} {raster.ny} {r.xmin!r} {r.xmax!r} {r.ymin!r} {r.ymax!r}"]
    grid = raster.as_grid()
    for row in grid:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
