"""Voxel world model: occupancy grids, raycasting, distance fields, obstacles.

Conventions used throughout the package: the world frame is z-up, yaw is
measured as atan2(dy, dx), grids store cell states in a (nx, ny, nz) uint8
array whose cell (i, j, k) spans the axis-aligned cube starting at
origin + (i, j, k) * resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

STATE_NAMES = {UNKNOWN: "unknown", FREE: "free", OCCUPIED: "occupied"}


class ScenarioError(ValueError):
    """Raised when scenario content is malformed or violates an invariant."""


class UnreachableError(RuntimeError):
    """Raised when no traversable path exists between two positions."""


class MissionError(RuntimeError):
    """Raised when a mission cannot be started or completed at all."""


# ---------- voxel grid ----------


@dataclass
class VoxelGrid:
    """Axis-aligned uniform voxel grid with three-state occupancy."""

    origin: np.ndarray
    resolution: float
    cells: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        if self.origin.shape != (3,):
            raise ScenarioError("grid origin must be a 3-vector")
        if not np.isfinite(self.resolution) or self.resolution <= 0:
            raise ScenarioError("grid resolution must be a positive number")
        self.cells = np.asarray(self.cells)
        if self.cells.ndim != 3 or min(self.cells.shape) < 1:
            raise ScenarioError("grid cells must be a non-empty 3-d array")
        if self.cells.dtype != np.uint8:
            self.cells = self.cells.astype(np.uint8)

    @classmethod
    def filled(cls, origin, resolution, dims, state=FREE) -> "VoxelGrid":
        cells = np.full(tuple(int(d) for d in dims), state, dtype=np.uint8)
        return cls(np.asarray(origin, dtype=float), float(resolution), cells)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cells.shape

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.resolution

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.origin.copy(), self.resolution, self.cells.copy())

    def world_to_index(self, points) -> np.ndarray:
        """Map world positions to integer cell indices (floor rule)."""
        pts = np.asarray(points, dtype=float)
        return np.floor((pts - self.origin) / self.resolution).astype(np.int64)

    def index_to_center(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=float)
        return self.origin + (idx + 0.5) * self.resolution

    def in_bounds_point(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.origin) and np.all(p < self.max_corner))

    def index_in_bounds(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        dims = np.array(self.dims)
        ok = np.all((idx >= 0) & (idx < dims), axis=-1)
        return ok

    def state_at(self, point) -> int:
        if not self.in_bounds_point(point):
            raise ValueError(f"point {np.asarray(point).tolist()} outside grid bounds")
        i, j, k = self.world_to_index(point)
        return int(self.cells[i, j, k])

    def flat_indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        nx, ny, nz = self.dims
        return (idx[..., 0] * ny + idx[..., 1]) * nz + idx[..., 2]

    def unflatten(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        nx, ny, nz = self.dims
        i, rem = np.divmod(flat, ny * nz)
        j, k = np.divmod(rem, nz)
        return np.stack([i, j, k], axis=-1)

    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self.cells == OCCUPIED)


class RaycastHit(NamedTuple):
    index: tuple[int, int, int]
    distance: float
    state: int


def _prepare_ray(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(d)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError("ray direction must be a unit vector")
    return d


def raycast(grid: VoxelGrid, origin, direction, max_range: float,
            opaque=(OCCUPIED, UNKNOWN)) -> RaycastHit | None:
    """March a single ray through the grid and return the first opaque cell.

    Cells are visited in strictly nondecreasing entry distance (standard
    integer DDA).  Unknown cells block by default so visibility stays
    conservative.  Returns None when the ray exits the grid or exceeds
    max_range without meeting an opaque cell.
    """
    o = np.asarray(origin, dtype=float)
    if not grid.in_bounds_point(o):
        raise ValueError(f"ray origin {o.tolist()} outside grid bounds")
    d = _prepare_ray(direction)
    opaque = set(opaque)

    res = grid.resolution
    idx = grid.world_to_index(o)
    state = int(grid.cells[idx[0], idx[1], idx[2]])
    if state in opaque:
        return RaycastHit((int(idx[0]), int(idx[1]), int(idx[2])), 0.0, state)

    safe = np.where(np.abs(d) < 1e-15, 1e-15, d)
    step = np.where(safe > 0, 1, -1).astype(np.int64)
    next_bound = grid.origin + (idx + (step > 0)) * res
    t_max = (next_bound - o) / safe
    t_delta = res / np.abs(safe)
    dims = grid.dims

    while True:
        axis = int(np.argmin(t_max))
        t_entry = float(t_max[axis])
        if t_entry > max_range:
            return None
        idx[axis] += step[axis]
        if idx[axis] < 0 or idx[axis] >= dims[axis]:
            return None
        t_max[axis] += t_delta[axis]
        state = int(grid.cells[idx[0], idx[1], idx[2]])
        if state in opaque:
            return RaycastHit((int(idx[0]), int(idx[1]), int(idx[2])), t_entry, state)


def raycast_bundle(grid: VoxelGrid, origin, directions, max_range,
                   opaque_mask: np.ndarray | None = None,
                   collect_traversed: bool = False):
    """Vectorized DDA over a bundle of rays sharing one origin.

    Args:
        directions: (R, 3) unit vectors.
        max_range: scalar or (R,) per-ray range limit.
        opaque_mask: optional (nx, ny, nz) bool array marking blocking cells.
            Defaults to everything that is not FREE.
        collect_traversed: also return indices of pass-through cells.

    Returns:
        hit_mask (R,), hit_index (R, 3), hit_distance (R,) and, if requested,
        an (M, 3) array of cells traversed before a hit or range exit.
    """
    o = np.asarray(origin, dtype=float)
    if not grid.in_bounds_point(o):
        raise ValueError(f"ray origin {o.tolist()} outside grid bounds")
    dirs = np.asarray(directions, dtype=float)
    n_rays = dirs.shape[0]
    ranges = np.broadcast_to(np.asarray(max_range, dtype=float), (n_rays,)).copy()
    if opaque_mask is None:
        opaque_mask = grid.cells != FREE

    res = grid.resolution
    dims = np.array(grid.dims)
    safe = np.where(np.abs(dirs) < 1e-15, 1e-15, dirs)
    step = np.where(safe > 0, 1, -1).astype(np.int64)

    idx = np.repeat(grid.world_to_index(o)[None, :], n_rays, axis=0)
    next_bound = grid.origin[None, :] + (idx + (step > 0)) * res
    t_max = (next_bound - o[None, :]) / safe
    t_delta = res / np.abs(safe)

    hit_mask = np.zeros(n_rays, dtype=bool)
    hit_index = np.zeros((n_rays, 3), dtype=np.int64)
    hit_dist = np.zeros(n_rays, dtype=float)
    traversed: list[np.ndarray] = []

    alive = np.ones(n_rays, dtype=bool)
    start_opaque = opaque_mask[idx[:, 0], idx[:, 1], idx[:, 2]]
    hit_mask[start_opaque] = True
    hit_index[start_opaque] = idx[start_opaque]
    alive &= ~start_opaque
    if collect_traversed and np.any(alive):
        traversed.append(idx[alive].copy())

    while np.any(alive):
        rows = np.nonzero(alive)[0]
        sub_t = t_max[rows]
        axis = np.argmin(sub_t, axis=1)
        t_entry = sub_t[np.arange(len(rows)), axis]

        over = t_entry > ranges[rows]
        alive[rows[over]] = False
        rows = rows[~over]
        if len(rows) == 0:
            break
        axis = axis[~over]
        t_entry = t_entry[~over]

        idx[rows, axis] += step[rows, axis]
        moved = idx[rows]
        oob = np.any((moved < 0) | (moved >= dims[None, :]), axis=1)
        alive[rows[oob]] = False
        rows = rows[~oob]
        if len(rows) == 0:
            continue
        axis = axis[~oob]
        t_entry = t_entry[~oob]
        t_max[rows, axis] += t_delta[rows, axis]

        cur = idx[rows]
        blocked = opaque_mask[cur[:, 0], cur[:, 1], cur[:, 2]]
        hit_rows = rows[blocked]
        hit_mask[hit_rows] = True
        hit_index[hit_rows] = cur[blocked]
        hit_dist[hit_rows] = t_entry[blocked]
        alive[hit_rows] = False
        if collect_traversed and np.any(~blocked):
            traversed.append(cur[~blocked].copy())

    if collect_traversed:
        if traversed:
            trav = np.concatenate(traversed, axis=0)
        else:
            trav = np.zeros((0, 3), dtype=np.int64)
        return hit_mask, hit_index, hit_dist, trav
    return hit_mask, hit_index, hit_dist


def visible_targets(grid: VoxelGrid, origin, target_indices,
                    opaque_mask: np.ndarray | None = None) -> np.ndarray:
    """Check which target cells are the first opaque cell along their ray.

    A target is visible when the ray from origin toward its center reaches
    the target cell before any other blocking cell.
    """
    targets = np.asarray(target_indices, dtype=np.int64)
    if targets.size == 0:
        return np.zeros(0, dtype=bool)
    centers = grid.index_to_center(targets)
    o = np.asarray(origin, dtype=float)
    delta = centers - o[None, :]
    dist = np.linalg.norm(delta, axis=1)
    visible = np.zeros(len(targets), dtype=bool)

    inside = dist < 1e-12
    visible[inside] = True
    rest = ~inside
    if not np.any(rest):
        return visible
    dirs = delta[rest] / dist[rest, None]
    hit_mask, hit_index, _ = raycast_bundle(
        grid, o, dirs, dist[rest] + grid.resolution, opaque_mask=opaque_mask)
    same = hit_mask & np.all(hit_index == targets[rest], axis=1)
    visible[rest] = same
    return visible


# ---------- distance field ----------


def distance_field(grid: VoxelGrid, truncation: float = 2.0) -> np.ndarray:
    """Truncated Euclidean distance (m) from cell centers to the nearest
    occupied cell center.  Occupied cells map to 0, everything is clamped
    at the truncation distance."""
    if truncation <= 0:
        raise ValueError("truncation must be positive")
    free_like = grid.cells != OCCUPIED
    if not np.any(~free_like):
        return np.full(grid.dims, truncation, dtype=float)
    edt = ndimage.distance_transform_edt(free_like, sampling=grid.resolution)
    return np.minimum(edt, truncation)


def sample_field(field_values: np.ndarray, grid: VoxelGrid, points) -> np.ndarray:
    """Trilinear interpolation of a cell-centered scalar field.

    Query coordinates are clamped to the cell-center lattice so the result
    is defined everywhere, including slightly outside the grid.
    """
    vals, _ = sample_field_gradient(field_values, grid, points, want_gradient=False)
    return vals


def sample_field_gradient(field_values: np.ndarray, grid: VoxelGrid, points,
                          want_gradient: bool = True):
    """Trilinear value and gradient of a cell-centered scalar field."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dims = np.array(grid.dims)
    g = (pts - grid.origin[None, :]) / grid.resolution - 0.5
    g = np.clip(g, 0.0, (dims - 1) - 1e-9)
    base = np.floor(g).astype(np.int64)
    base = np.minimum(base, dims - 2)
    base = np.maximum(base, 0)
    frac = g - base

    corners = np.empty((len(pts), 2, 2, 2))
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                corners[:, di, dj, dk] = field_values[
                    base[:, 0] + di, base[:, 1] + dj, base[:, 2] + dk]

    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    c00 = corners[:, 0, 0, 0] * (1 - fx) + corners[:, 1, 0, 0] * fx
    c01 = corners[:, 0, 0, 1] * (1 - fx) + corners[:, 1, 0, 1] * fx
    c10 = corners[:, 0, 1, 0] * (1 - fx) + corners[:, 1, 1, 0] * fx
    c11 = corners[:, 0, 1, 1] * (1 - fx) + corners[:, 1, 1, 1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    vals = c0 * (1 - fz) + c1 * fz

    if not want_gradient:
        return vals, None

    dx00 = corners[:, 1, 0, 0] - corners[:, 0, 0, 0]
    dx01 = corners[:, 1, 0, 1] - corners[:, 0, 0, 1]
    dx10 = corners[:, 1, 1, 0] - corners[:, 0, 1, 0]
    dx11 = corners[:, 1, 1, 1] - corners[:, 0, 1, 1]
    gx = ((dx00 * (1 - fy) + dx10 * fy) * (1 - fz)
          + (dx01 * (1 - fy) + dx11 * fy) * fz) / grid.resolution
    gy = ((c10 - c00) * (1 - fz) + (c11 - c01) * fz) / grid.resolution
    gz = (c1 - c0) / grid.resolution
    grads = np.stack([gx, gy, gz], axis=1)
    return vals, grads


# ---------- surfaces ----------


@dataclass
class SurfaceSet:
    """Inspectable surface cells, optionally annotated with unit normals."""

    cells: np.ndarray
    normals: np.ndarray | None = None
    curvatures: np.ndarray | None = None

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            if len(self.normals) != len(self.cells):
                raise ScenarioError("surfaces: normals length must match cells")
        if self.curvatures is not None:
            self.curvatures = np.asarray(self.curvatures, dtype=float).reshape(-1)
            if len(self.curvatures) != len(self.cells):
                raise ScenarioError("surfaces: curvatures length must match cells")

    def __len__(self) -> int:
        return len(self.cells)

    def centers(self, grid: VoxelGrid) -> np.ndarray:
        return grid.index_to_center(self.cells)

    def row_lookup(self, grid: VoxelGrid) -> np.ndarray:
        """Dense map from flat cell index to surface row (-1 elsewhere)."""
        table = np.full(int(np.prod(grid.dims)), -1, dtype=np.int64)
        table[grid.flat_indices(self.cells)] = np.arange(len(self.cells))
        return table

    def validate(self, grid: VoxelGrid, context: str = "surfaces"):
        if len(self.cells) == 0:
            return
        if not np.all(grid.index_in_bounds(self.cells)):
            raise ScenarioError(f"{context}: cell index outside grid dims")
        states = grid.cells[self.cells[:, 0], self.cells[:, 1], self.cells[:, 2]]
        if not np.all(states == OCCUPIED):
            bad = self.cells[states != OCCUPIED][0]
            raise ScenarioError(
                f"{context}: cell {bad.tolist()} is not occupied in the grid")
        flats = grid.flat_indices(self.cells)
        if len(np.unique(flats)) != len(flats):
            raise ScenarioError(f"{context}: duplicate surface cells")
        if self.normals is not None:
            norms = np.linalg.norm(self.normals, axis=1)
            if not np.all(np.abs(norms - 1.0) <= 1e-6):
                raise ScenarioError(f"{context}: normals must have unit length")


# ---------- camera ----------


@dataclass
class CameraModel:
    """Pinhole-style frustum model, yaw-only orientation, zero pitch."""

    fov_h: float = math.radians(90.0)
    fov_v: float = math.radians(60.0)
    max_range: float = 4.0
    max_incidence: float = math.radians(70.0)

    def __post_init__(self):
        if not 0 < self.fov_h < math.pi:
            raise ScenarioError("camera fov_h_rad must lie in (0, pi)")
        if not 0 < self.fov_v < math.pi:
            raise ScenarioError("camera fov_v_rad must lie in (0, pi)")
        if self.max_range <= 0:
            raise ScenarioError("camera range_m must be positive")
        if not 0 < self.max_incidence <= math.pi / 2:
            raise ScenarioError("camera max_incidence_rad must lie in (0, pi/2]")


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def frustum_mask(position, yaw: float, camera: CameraModel, centers: np.ndarray):
    """Boolean mask of points inside the yaw-oriented camera frustum."""
    delta = np.atleast_2d(centers) - np.asarray(position, dtype=float)[None, :]
    dist = np.linalg.norm(delta, axis=1)
    horiz = np.hypot(delta[:, 0], delta[:, 1])
    bearing = np.arctan2(delta[:, 1], delta[:, 0])
    elev = np.arctan2(delta[:, 2], horiz)
    ok = dist <= camera.max_range
    ok &= np.abs(wrap_angle(bearing - yaw)) <= camera.fov_h / 2 + 1e-12
    ok &= np.abs(elev) <= camera.fov_v / 2 + 1e-12
    ok &= dist > 1e-9
    return ok, delta, dist


# ---------- obstacles ----------


@dataclass
class Box:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        self.min_corner = np.asarray(self.min_corner, dtype=float)
        self.max_corner = np.asarray(self.max_corner, dtype=float)
        if np.any(self.max_corner <= self.min_corner):
            raise ScenarioError("box max_m must exceed min_m on every axis")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    def contains(self, points, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
        pts = np.atleast_2d(points) - np.asarray(offset, dtype=float)
        return np.all((pts >= self.min_corner) & (pts <= self.max_corner), axis=1)

    def surface_distance(self, point, offset=(0.0, 0.0, 0.0)) -> float:
        p = np.asarray(point, dtype=float) - np.asarray(offset, dtype=float)
        d = np.maximum(self.min_corner - p, p - self.max_corner)
        outside = np.linalg.norm(np.maximum(d, 0.0))
        inside = min(np.max(d), 0.0)
        return float(outside + inside)

    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.max_corner - self.min_corner) / 2)


@dataclass
class Cylinder:
    """Vertical cylinder given by its axis midpoint, radius and height."""

    center: np.ndarray
    radius: float
    height: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.radius <= 0 or self.height <= 0:
            raise ScenarioError("cylinder radius_m and height_m must be positive")

    def contains(self, points, offset=(0.0, 0.0, 0.0)) -> np.ndarray:
        pts = np.atleast_2d(points) - np.asarray(offset, dtype=float)
        rel = pts - self.center
        in_xy = np.hypot(rel[:, 0], rel[:, 1]) <= self.radius
        in_z = np.abs(rel[:, 2]) <= self.height / 2
        return in_xy & in_z

    def surface_distance(self, point, offset=(0.0, 0.0, 0.0)) -> float:
        p = np.asarray(point, dtype=float) - np.asarray(offset, dtype=float)
        rel = p - self.center
        dr = math.hypot(rel[0], rel[1]) - self.radius
        dz = abs(rel[2]) - self.height / 2
        if dr <= 0 and dz <= 0:
            return float(max(dr, dz))
        return float(math.hypot(max(dr, 0.0), max(dz, 0.0)))

    def bounding_radius(self) -> float:
        return float(math.hypot(self.radius, self.height / 2))


@dataclass
class Obstacle:
    """Static or moving obstacle.

    Dynamic motion follows a waypoint polyline at constant speed.  With
    looping=True the polyline closes back on itself, otherwise the obstacle
    ping-pongs between the ends.  Either way the trajectory is continuous
    and periodic in time.
    """

    shape: Box | Cylinder
    waypoints: np.ndarray | None = None
    speed: float = 0.0
    looping: bool = True

    def __post_init__(self):
        if self.waypoints is not None:
            self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 3)
            if len(self.waypoints) < 1:
                raise ScenarioError("obstacle motion needs at least one waypoint")
            if self.speed < 0:
                raise ScenarioError("obstacle speed_mps must be nonnegative")

    @property
    def dynamic(self) -> bool:
        return self.waypoints is not None

    def _nominal_center(self) -> np.ndarray:
        return self.shape.center if isinstance(self.shape, Box) else self.shape.center

    def _loop_points(self) -> np.ndarray:
        w = self.waypoints
        if len(w) == 1:
            return w
        if self.looping:
            return np.vstack([w, w[:1]])
        return np.vstack([w, w[-2::-1]])

    def center_at(self, t: float) -> np.ndarray:
        """Shape center position at time t (equals the shape center for
        static obstacles)."""
        if not self.dynamic:
            return np.asarray(self._nominal_center(), dtype=float)
        pts = self._loop_points()
        if len(pts) == 1 or self.speed == 0.0:
            return pts[0].copy()
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        total = float(seg_len.sum())
        if total <= 0:
            return pts[0].copy()
        s = (self.speed * t) % total
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(seg) - 1)
        frac = (s - cum[i]) / seg_len[i] if seg_len[i] > 0 else 0.0
        return pts[i] + frac * seg[i]

    def velocity_at(self, t: float) -> np.ndarray:
        """Velocity of the current polyline segment at time t."""
        if not self.dynamic or self.speed == 0.0:
            return np.zeros(3)
        pts = self._loop_points()
        if len(pts) == 1:
            return np.zeros(3)
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        total = float(seg_len.sum())
        if total <= 0:
            return np.zeros(3)
        s = (self.speed * t) % total
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(i, len(seg) - 1)
        if seg_len[i] <= 0:
            return np.zeros(3)
        return self.speed * seg[i] / seg_len[i]

    def offset_at(self, t: float) -> np.ndarray:
        return self.center_at(t) - self._nominal_center()

    def occupied_cells(self, grid: VoxelGrid, t: float = 0.0) -> np.ndarray:
        """Indices of grid cells whose center lies inside the shape at time t."""
        offset = self.offset_at(t) if self.dynamic else np.zeros(3)
        center = self._nominal_center() + offset
        radius = self.shape.bounding_radius()
        lo = grid.world_to_index(center - radius - grid.resolution)
        hi = grid.world_to_index(center + radius + grid.resolution) + 1
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, np.array(grid.dims))
        if np.any(hi <= lo):
            return np.zeros((0, 3), dtype=np.int64)
        ii, jj, kk = np.meshgrid(np.arange(lo[0], hi[0]),
                                 np.arange(lo[1], hi[1]),
                                 np.arange(lo[2], hi[2]), indexing="ij")
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        centers = grid.index_to_center(idx)
        inside = self.shape.contains(centers, offset=offset)
        return idx[inside]

    def surface_distance(self, point, t: float = 0.0) -> float:
        offset = self.offset_at(t) if self.dynamic else np.zeros(3)
        return self.shape.surface_distance(point, offset=offset)

    def bounding_radius(self) -> float:
        return self.shape.bounding_radius()


def stamp_obstacles(grid: VoxelGrid, obstacles: Sequence[Obstacle],
                    t: float = 0.0) -> VoxelGrid:
    """Return a copy of the grid with obstacle cells marked occupied."""
    out = grid.copy()
    for obs in obstacles:
        idx = obs.occupied_cells(out, t)
        if len(idx):
            out.cells[idx[:, 0], idx[:, 1], idx[:, 2]] = OCCUPIED
    return out
