"""Farm geometry: beams, camera poses, FOV triangles and the coverage raster.

Coordinates are meters with the origin at the farm's lower-left corner
(shifted by ``FarmLayout.origin``). Orientation is measured counter-clockwise
from +X in degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

HORIZONTAL = "horizontal"
VERTICAL = "vertical"

_EDGE_EPS = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Beam:
    axis: str
    offset: float

    def __post_init__(self):
        if self.axis not in (HORIZONTAL, VERTICAL):
            raise GeometryError(f"beam axis must be horizontal or vertical, got {self.axis!r}")


@dataclass(frozen=True)
class FarmLayout:
    length: float
    width: float
    pixel_size: float
    beams: tuple[Beam, ...]
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.pixel_size <= 0:
            raise GeometryError("length, width and pixel_size must be positive")
        if not self.beams:
            raise GeometryError("layout needs at least one beam")
        object.__setattr__(self, "beams", tuple(self.beams))
        for b in self.beams:
            limit = self.width if b.axis == HORIZONTAL else self.length
            if not 0.0 <= b.offset <= limit:
                raise GeometryError(f"beam offset {b.offset} outside [0, {limit}] for {b.axis} beam")

    @property
    def area(self) -> float:
        return self.length * self.width

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(cells along X, cells along Y)."""
        return _cells(self.length, self.pixel_size), _cells(self.width, self.pixel_size)

    def beam_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Beams as (is_vertical int array, offset array), in beam order."""
        axes = np.array([1 if b.axis == VERTICAL else 0 for b in self.beams], dtype=np.int64)
        offsets = np.array([b.offset for b in self.beams], dtype=np.float64)
        return axes, offsets

    def translated(self, dx: float, dy: float) -> FarmLayout:
        return FarmLayout(self.length, self.width, self.pixel_size, self.beams,
                          (self.origin[0] + dx, self.origin[1] + dy))


@dataclass(frozen=True)
class CameraSpec:
    fov_deg: float
    depth: float
    count: int = 1

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise GeometryError(f"fov_deg must lie strictly inside (0, 180), got {self.fov_deg}")
        if self.depth <= 0:
            raise GeometryError("depth must be positive")
        if int(self.count) != self.count or self.count < 1:
            raise GeometryError("camera count must be a positive integer")

    @property
    def half_base(self) -> float:
        return self.depth * math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass(frozen=True)
class CameraPose:
    x: float
    y: float
    orientation_deg: float
    beam_index: int

    def translated(self, dx: float, dy: float) -> CameraPose:
        return CameraPose(self.x + dx, self.y + dy, self.orientation_deg, self.beam_index)


@dataclass
class CoverageGrid:
    # cells[i, j]: i indexes X, j indexes Y
    cells: np.ndarray
    covered: int = field(init=False)

    def __post_init__(self):
        self.covered = int(np.count_nonzero(self.cells))

    @property
    def fraction(self) -> float:
        return self.covered / self.cells.size


def _cells(extent: float, pixel: float) -> int:
    # 20.5 / 0.1 is 204.99999999999997 in floating point
    return max(1, math.ceil(extent / pixel - 1e-9))


def paper_farm() -> tuple[FarmLayout, CameraSpec]:
    """The deployed poultry house: 20.5 x 6.5 m, eight beams, six 102-degree cameras."""
    beams = [Beam(HORIZONTAL, y) for y in (0.0, 3.25, 6.5)]
    beams += [Beam(VERTICAL, x) for x in (0.0, 5.125, 10.25, 15.375, 20.5)]
    return FarmLayout(20.5, 6.5, 0.1, tuple(beams)), CameraSpec(102.0, 5.0, 6)


def _check_genes(genes: np.ndarray, spec: CameraSpec) -> np.ndarray:
    g = np.asarray(genes, dtype=np.float64).ravel()
    if g.size != 3 * spec.count:
        raise GeometryError(f"genotype has {g.size} genes, expected {3 * spec.count} for {spec.count} cameras")
    if np.any(g < 0.0) or np.any(g > 1.0) or not np.all(np.isfinite(g)):
        raise GeometryError("genes must lie in [0, 1]")
    return g


@numba.njit(cache=True)
def _snap(px, py, length, width, axes, offsets):
    best = -1
    best_d = np.inf
    bx = 0.0
    by = 0.0
    for k in range(axes.shape[0]):
        if axes[k] == 0:
            qx = min(max(px, 0.0), length)
            qy = offsets[k]
        else:
            qx = offsets[k]
            qy = min(max(py, 0.0), width)
        d = (px - qx) ** 2 + (py - qy) ** 2
        if d < best_d:
            best_d = d
            best = k
            bx = qx
            by = qy
    return bx, by, best


@numba.njit(cache=True)
def _decode(genes, length, width, axes, offsets):
    n = genes.shape[0] // 3
    out = np.empty((n, 3))
    idx = np.empty(n, dtype=np.int64)
    for c in range(n):
        x, y, k = _snap(genes[3 * c] * length, genes[3 * c + 1] * width, length, width, axes, offsets)
        out[c, 0] = x
        out[c, 1] = y
        out[c, 2] = (genes[3 * c + 2] * 360.0) % 360.0
        idx[c] = k
    return out, idx


def decode_genotype(genes: Sequence[float], layout: FarmLayout, spec: CameraSpec) -> list[CameraPose]:
    """Map a normalized genotype onto camera poses mounted on beams.

    Each camera's (x-gene, y-gene) is scaled to farm coordinates and projected
    onto the nearest beam (ties go to the lowest beam index); the orientation
    gene maps linearly onto [0, 360).
    """
    g = _check_genes(genes, spec)
    axes, offsets = layout.beam_arrays()
    poses, idx = _decode(g, layout.length, layout.width, axes, offsets)
    ox, oy = layout.origin
    return [CameraPose(float(p[0]) + ox, float(p[1]) + oy, float(p[2]), int(k))
            for p, k in zip(poses, idx)]


def encode_poses(poses: Sequence[CameraPose], layout: FarmLayout) -> np.ndarray:
    """Inverse of the scaling step of :func:`decode_genotype` (no snapping)."""
    ox, oy = layout.origin
    genes = []
    for p in poses:
        genes += [(p.x - ox) / layout.length, (p.y - oy) / layout.width, (p.orientation_deg % 360.0) / 360.0]
    return np.clip(np.array(genes, dtype=np.float64), 0.0, 1.0)


def fov_triangle(pose: CameraPose, spec: CameraSpec) -> np.ndarray:
    """Vertices (apex, right base, left base) of a camera's isosceles FOV triangle.

    The triangle's height along the viewing direction equals ``spec.depth``.
    """
    return _triangle(pose.x, pose.y, pose.orientation_deg, spec.depth, spec.half_base)


def _triangle(x, y, orientation_deg, depth, half_base):
    t = math.radians(orientation_deg)
    ux, uy = math.cos(t), math.sin(t)
    vx, vy = -uy, ux
    cx, cy = x + depth * ux, y + depth * uy
    return np.array([[x, y],
                     [cx - half_base * vx, cy - half_base * vy],
                     [cx + half_base * vx, cy + half_base * vy]])


@numba.njit(cache=True)
def _raster_triangle(grid, ax, ay, bx, by, cx, cy, x0, y0, pix):
    nx, ny = grid.shape
    # orient counter-clockwise so all edge functions are >= 0 inside
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area2 < 0.0:
        bx, cx = cx, bx
        by, cy = cy, by
        area2 = -area2
    if area2 == 0.0:
        return
    tol = 1e-9 * area2
    lo_x = min(ax, min(bx, cx))
    hi_x = max(ax, max(bx, cx))
    lo_y = min(ay, min(by, cy))
    hi_y = max(ay, max(by, cy))
    i0 = max(0, int(math.floor((lo_x - x0) / pix - 0.5)))
    i1 = min(nx - 1, int(math.ceil((hi_x - x0) / pix - 0.5)))
    j0 = max(0, int(math.floor((lo_y - y0) / pix - 0.5)))
    j1 = min(ny - 1, int(math.ceil((hi_y - y0) / pix - 0.5)))
    for i in range(i0, i1 + 1):
        px = x0 + (i + 0.5) * pix
        for j in range(j0, j1 + 1):
            py = y0 + (j + 0.5) * pix
            e0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            if e0 < -tol:
                continue
            e1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
            if e1 < -tol:
                continue
            e2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
            if e2 < -tol:
                continue
            grid[i, j] = True


@numba.njit(cache=True)
def _raster_poses(grid, poses, depth, half_base, x0, y0, pix):
    for c in range(poses.shape[0]):
        t = math.radians(poses[c, 2])
        ux = math.cos(t)
        uy = math.sin(t)
        mx = poses[c, 0] + depth * ux
        my = poses[c, 1] + depth * uy
        _raster_triangle(grid, poses[c, 0], poses[c, 1],
                         mx + half_base * uy, my - half_base * ux,
                         mx - half_base * uy, my + half_base * ux,
                         x0, y0, pix)


@numba.njit(cache=True)
def _genotype_coverage(genes, length, width, axes, offsets, depth, half_base, pix, grid):
    poses, _ = _decode(genes, length, width, axes, offsets)
    grid[:, :] = False
    _raster_poses(grid, poses, depth, half_base, 0.0, 0.0, pix)
    return np.count_nonzero(grid) / grid.size


def coverage_grid(poses: Sequence[CameraPose], spec: CameraSpec, layout: FarmLayout) -> CoverageGrid:
    """Rasterize the union of FOV triangles onto the farm grid.

    A cell is covered iff its center lies inside (or on the boundary of) any
    triangle. Triangle parts outside the farm are ignored.
    """
    grid = np.zeros(layout.grid_shape, dtype=np.bool_)
    if poses:
        arr = np.array([[p.x, p.y, p.orientation_deg] for p in poses], dtype=np.float64)
        _raster_poses(grid, arr, spec.depth, spec.half_base,
                      layout.origin[0], layout.origin[1], layout.pixel_size)
    return CoverageGrid(grid)


def coverage_fraction(poses: Sequence[CameraPose], spec: CameraSpec, layout: FarmLayout) -> float:
    """Fraction of farm cells whose center falls inside at least one FOV triangle."""
    return coverage_grid(poses, spec, layout).fraction


def beam_usage_descriptor(poses: Sequence[CameraPose], layout: FarmLayout) -> tuple[int, ...]:
    bits = [0] * len(layout.beams)
    for p in poses:
        if not 0 <= p.beam_index < len(bits):
            raise GeometryError(f"beam_index {p.beam_index} out of range for {len(bits)} beams")
        bits[p.beam_index] = 1
    return tuple(bits)


def min_camera_estimate(layout: FarmLayout, spec: CameraSpec) -> int:
    """Lower bound on camera count from farm area over circular-sector area."""
    sector = spec.fov_deg / 360.0 * math.pi * spec.depth ** 2
    return max(1, math.ceil(layout.area / sector - 1e-9))


class CoverageObjective:
    """Genotype -> coverage fitness, compiled for the optimizer's inner loop.

    Calls are pure: each evaluation re-rasterizes into a private scratch grid,
    so one instance must not be shared across threads.
    """

    def __init__(self, layout: FarmLayout, spec: CameraSpec):
        if layout.origin != (0.0, 0.0):
            layout = FarmLayout(layout.length, layout.width, layout.pixel_size, layout.beams)
        self.layout = layout
        self.spec = spec
        self.dim = 3 * spec.count
        self._axes, self._offsets = layout.beam_arrays()
        self._grid = np.zeros(layout.grid_shape, dtype=np.bool_)

    def __call__(self, genes) -> float:
        g = np.ascontiguousarray(genes, dtype=np.float64)
        if g.shape != (self.dim,):
            raise GeometryError(f"genotype has {g.size} genes, expected {self.dim}")
        return float(_genotype_coverage(g, self.layout.length, self.layout.width, self._axes,
                                        self._offsets, self.spec.depth, self.spec.half_base,
                                        self.layout.pixel_size, self._grid))

    def descriptor(self, genes) -> tuple[int, ...]:
        g = np.ascontiguousarray(genes, dtype=np.float64)
        _, idx = _decode(g, self.layout.length, self.layout.width, self._axes, self._offsets)
        bits = [0] * len(self.layout.beams)
        for k in idx:
            bits[k] = 1
        return tuple(bits)

    def poses(self, genes) -> list[CameraPose]:
        return decode_genotype(genes, self.layout, self.spec)
