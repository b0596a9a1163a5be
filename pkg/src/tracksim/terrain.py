"""Heightfield terrain: ray-cast elevation, normals, terrain frames and
procedural generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import uniform_filter

from .core import State3D, VehicleParams, rot_to_rpy
from .errors import DegenerateNormal, OutOfTerrain

RAY_BASELINE_Z = -10.0
PENETRATION_TOL = 1e-6


class TerrainQuery(NamedTuple):
    elevation: np.ndarray
    normal_nt: np.ndarray
    hit: np.ndarray


@dataclass(frozen=True)
class HeightField:
    """Elevation samples ``grid[i, j]`` at ``(origin_x + i*cell, origin_y + j*cell)``.

    Each cell is split into two triangles along its lower-left to
    upper-right diagonal, giving a continuous piecewise-linear surface.
    """

    grid: np.ndarray
    origin: tuple = (0.0, 0.0)
    cell_size: float = 0.1

    def __post_init__(self):
        g = np.array(self.grid, dtype=float)
        if g.ndim != 2 or g.shape[0] < 2 or g.shape[1] < 2:
            raise ValueError("grid must be at least 2x2")
        if not np.all(np.isfinite(g)):
            raise ValueError("grid elevations must be finite")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def extent(self):
        nx, ny = self.grid.shape
        ox, oy = self.origin
        return (ox, ox + (nx - 1) * self.cell_size, oy, oy + (ny - 1) * self.cell_size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["origin_x", "origin_y", "cell_size"])
            w.writerow([repr(self.origin[0]), repr(self.origin[1]), repr(self.cell_size)])
            for row in self.grid:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "HeightField":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        ox, oy, cell = (float(v) for v in rows[1])
        grid = np.array([[float(v) for v in r] for r in rows[2:] if r])
        return cls(grid, (ox, oy), cell)


def _locate(hf: HeightField, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = hf.grid.shape
    gx = (x - hf.origin[0]) / hf.cell_size
    gy = (y - hf.origin[1]) / hf.cell_size
    hit = (gx >= 0) & (gx <= nx - 1) & (gy >= 0) & (gy <= ny - 1)
    i = np.clip(np.floor(gx), 0, nx - 2).astype(int)
    j = np.clip(np.floor(gy), 0, ny - 2).astype(int)
    u = np.where(hit, gx - i, 0.0)
    v = np.where(hit, gy - j, 0.0)
    return i, j, u, v, hit


def surface(hf: HeightField, x, y):
    """Elevation and gradient (dz/dx, dz/dy) of the triangulated surface.

    Outside the grid the nearest border cell is extrapolated; ``hit`` marks
    queries that actually fall on the field.
    """
    i, j, u, v, hit = _locate(hf, x, y)
    g = hf.grid
    z00, z10, z01, z11 = g[i, j], g[i + 1, j], g[i, j + 1], g[i + 1, j + 1]
    lower = v <= u
    # lower triangle (0,0),(1,0),(1,1); upper triangle (0,0),(1,1),(0,1)
    dzu = np.where(lower, z10 - z00, z11 - z01)
    dzv = np.where(lower, z11 - z10, z01 - z00)
    elev = z00 + u * dzu + v * dzv
    return elev, dzu / hf.cell_size, dzv / hf.cell_size, hit


def _normal_from_gradient(gx, gy):
    n = np.stack(np.broadcast_arrays(-gx, -gy, np.ones_like(gx)), axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def raycast_elevation(hf: HeightField, x, y) -> TerrainQuery:
    """Intersect a vertical ray cast upwards from ``z = -10`` with the field.

    Misses report ``hit = False`` with NaN elevation.
    """
    elev, gx, gy, hit = surface(hf, x, y)
    normal = _normal_from_gradient(gx, gy)
    return TerrainQuery(np.where(hit, elev, np.nan), normal, hit)


def terrain_frame(normal_nt, yaw_hint: float) -> np.ndarray:
    """World-from-terrain rotation: z along the normal, x along the heading
    ``yaw_hint`` projected onto the tangent plane."""
    n = np.asarray(normal_nt, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    yaw = np.asarray(yaw_hint, dtype=float)
    h = np.stack(np.broadcast_arrays(np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)), axis=-1)
    tx = h - np.sum(h * n, axis=-1, keepdims=True) * n
    norm = np.linalg.norm(tx, axis=-1, keepdims=True)
    if np.any(norm < 1e-9):
        raise DegenerateNormal("heading is parallel to the terrain normal")
    tx = tx / norm
    ty = np.cross(n, tx)
    return np.stack([tx, ty, n], axis=-1)


def make_flat(extent: float = 20.0, cell: float = 0.1, elevation: float = 0.0) -> HeightField:
    return make_ramp(0.0, extent, cell, offset=elevation)


def make_ramp(slope_rad: float, extent: float = 20.0, cell: float = 0.1, offset: float = 0.0) -> HeightField:
    """Plane ``z = tan(slope) * x`` over a square centred on the origin."""
    if not (extent > 0 and cell > 0):
        raise ValueError("extent and cell must be positive")
    n = int(round(extent / cell)) + 1
    xs = -extent / 2 + cell * np.arange(n)
    grid = np.tan(slope_rad) * np.repeat(xs[:, None], n, axis=1) + offset
    return HeightField(grid, (-extent / 2, -extent / 2), cell)


def make_random_slope(seed: int, amplitude: float = 0.2, smoothness: int = 4, extent: float = 20.0,
                      cell: float = 0.1, tilt_rad: float = 0.0, feature: float = 1.0) -> HeightField:
    """Smooth random terrain: seeded value noise on a ``feature``-spaced
    lattice, upsampled bilinearly and box-filtered ``smoothness`` times,
    scaled to peak ``amplitude`` and superposed on a ramp of ``tilt_rad``."""
    if not (extent > 0 and cell > 0 and feature > 0):
        raise ValueError("extent, cell and feature must be positive")
    rng = np.random.default_rng(seed)
    n = int(round(extent / cell)) + 1
    m = int(np.ceil(extent / feature)) + 2
    lattice = rng.uniform(-1.0, 1.0, (m, m))
    s = np.arange(n) * cell / feature
    i0 = np.minimum(s.astype(int), m - 2)
    f = s - i0
    rows = lattice[i0] * (1 - f)[:, None] + lattice[i0 + 1] * f[:, None]
    noise = rows[:, i0] * (1 - f)[None, :] + rows[:, i0 + 1] * f[None, :]
    width = max(3, int(round(feature / cell)) | 1)
    for _ in range(int(smoothness)):
        noise = uniform_filter(noise, size=width, mode="nearest")
    peak = np.max(np.abs(noise))
    if peak > 0:
        noise = noise * (amplitude / peak)
    xs = -extent / 2 + cell * np.arange(n)
    grid = noise + np.tan(tilt_rad) * xs[:, None]
    return HeightField(grid, (-extent / 2, -extent / 2), cell)


def patch_body_points(vp: VehicleParams) -> np.ndarray:
    """Body-frame positions of all track patches (left then right), at the
    track/ground contact level ``z = -com_height``."""
    from .terramechanics import make_footprint

    pts = []
    for side in ("left", "right"):
        fp = make_footprint(vp, side)
        pts.append(np.stack([fp.x, fp.y, np.full(fp.n, -vp.com_height)], axis=-1))
    return np.concatenate(pts)


def initial_pose_on_terrain(hf: HeightField, x: float, y: float, yaw: float, vp: VehicleParams) -> State3D:
    """Rest pose aligned with the local terrain normal, lifted so that no
    track patch starts inside the terrain."""
    q = raycast_elevation(hf, x, y)
    if not bool(q.hit):
        raise OutOfTerrain(f"({x}, {y}) outside the heightfield")
    R = terrain_frame(q.normal_nt, yaw)
    rpy = rot_to_rpy(R)
    ground = np.array([x, y, float(q.elevation)])
    p = ground + vp.com_height * q.normal_nt
    pts = p + patch_body_points(vp) @ R.T
    pq = raycast_elevation(hf, pts[:, 0], pts[:, 1])
    if not np.all(pq.hit):
        raise OutOfTerrain("track footprint leaves the heightfield")
    lift = np.max(pq.elevation - pts[:, 2])
    if lift > 0:
        p = p + np.array([0.0, 0.0, lift])
    return State3D(p, rpy, np.zeros(3), np.zeros(3))
