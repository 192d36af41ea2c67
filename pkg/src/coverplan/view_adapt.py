"""Occlusion-aware view-angle adaptation.

When planned viewpoints are invalidated by obstacles that were not in the
reference map, the robot re-aims its camera: surface cells are weighted
(occluded footprints high, already-scanned low), candidate yaw angles are
scored by weighted visible surface, and the best angle wins with stable
tie-breaking toward the current heading.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .viewpoints import Viewpoint, ViewpointStatus
from .world import (FREE, OCCUPIED, CameraModel, SurfaceSet, VoxelGrid,
                    frustum_mask, raycast, visible_targets, wrap_angle)


class WeightClass(enum.IntEnum):
    BASE = 0
    OCCLUDED = 1
    SCANNED = 2


@dataclass
class WeightGrid:
    """Per-surface-cell scan weights plus their class labels."""

    weights: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        if len(self.weights) != len(self.classes):
            raise ValueError("weights and classes must have equal length")


def make_candidate_angles(spacing: float) -> np.ndarray:
    """Uniform yaw samples over [-pi, pi) at the given spacing."""
    if spacing <= 0 or spacing > 2 * math.pi:
        raise ValueError("angle spacing must lie in (0, 2*pi]")
    count = max(1, round(2 * math.pi / spacing))
    return -math.pi + np.arange(count) * (2 * math.pi / count)


def identify_blocked(online: VoxelGrid, viewpoints: list[Viewpoint],
                     surfaces: SurfaceSet, camera: CameraModel,
                     robot_radius: float) -> list[int]:
    """Ids of pending viewpoints invalidated by newly observed geometry.

    A viewpoint is blocked when occupied cells of the online map intrude on
    its position within the robot radius, or when its central viewing ray is
    interrupted by an occupied cell that is not part of the reference
    surface.
    """
    surface_lookup = surfaces.row_lookup(online)
    blocked = []
    for vp in viewpoints:
        if vp.status is not ViewpointStatus.PENDING:
            continue
        if _position_blocked(online, vp.position, robot_radius):
            blocked.append(vp.id)
            continue
        if _central_ray_blocked(online, vp, camera, surface_lookup):
            blocked.append(vp.id)
    return blocked


def _position_blocked(online: VoxelGrid, position: np.ndarray,
                      robot_radius: float) -> bool:
    if not online.in_bounds_point(position):
        return True
    res = online.resolution
    reach = int(math.ceil(robot_radius / res)) + 1
    center_idx = online.world_to_index(position)
    lo = np.maximum(center_idx - reach, 0)
    hi = np.minimum(center_idx + reach + 1, np.array(online.dims))
    sub = online.cells[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
    occ = np.argwhere(sub == OCCUPIED)
    if len(occ) == 0:
        return False
    centers = online.index_to_center(occ + lo)
    dist = np.linalg.norm(centers - position[None, :], axis=1)
    # a cell intrudes when any part of it can lie within the radius
    halo = online.resolution * math.sqrt(3.0) / 2.0
    return bool(np.any(dist <= robot_radius + halo))


def _central_ray_blocked(online: VoxelGrid, vp: Viewpoint, camera: CameraModel,
                         surface_lookup: np.ndarray) -> bool:
    direction = np.array([math.cos(vp.yaw), math.sin(vp.yaw), 0.0])
    hit = raycast(online, vp.position, direction, camera.max_range)
    if hit is None or hit.state != OCCUPIED:
        return False
    flat = online.flat_indices(np.array(hit.index))
    return surface_lookup[int(flat)] < 0


def occluded_regions(viewpoint: Viewpoint, scanned: np.ndarray) -> np.ndarray:
    """Surface rows a blocked viewpoint would have scanned but has not."""
    rows = viewpoint.covered_rows
    return rows[~scanned[rows]]


def build_weights(n_surface: int, occluded_rows, scanned_rows, *,
                  base: float = 1.0, occluded: float = 3.0,
                  scanned: float = 0.1) -> WeightGrid:
    """Weight every surface cell; occlusion beats the scanned discount."""
    weights = np.full(n_surface, base, dtype=float)
    classes = np.full(n_surface, int(WeightClass.BASE), dtype=np.int64)
    scanned_rows = np.asarray(scanned_rows, dtype=np.int64)
    occluded_rows = np.asarray(occluded_rows, dtype=np.int64)
    if scanned_rows.size:
        weights[scanned_rows] = scanned
        classes[scanned_rows] = int(WeightClass.SCANNED)
    if occluded_rows.size:
        weights[occluded_rows] = occluded
        classes[occluded_rows] = int(WeightClass.OCCLUDED)
    return WeightGrid(weights, classes)


def _visibility_and_geometry(position, online: VoxelGrid, surfaces: SurfaceSet,
                             camera: CameraModel):
    """Visibility of every in-range surface cell from one position."""
    centers = surfaces.centers(online)
    delta = centers - np.asarray(position, dtype=float)[None, :]
    dist = np.linalg.norm(delta, axis=1)
    in_range = (dist <= camera.max_range) & (dist > 1e-9)
    rows = np.nonzero(in_range)[0]
    visible = np.zeros(len(centers), dtype=bool)
    if rows.size:
        vis = visible_targets(online, position, surfaces.cells[rows])
        visible[rows] = vis
    bearing = np.arctan2(delta[:, 1], delta[:, 0])
    elev = np.arctan2(delta[:, 2], np.hypot(delta[:, 0], delta[:, 1]))
    return visible, bearing, elev


def raycast_score(angle: float, position, camera: CameraModel,
                  wgrid: WeightGrid, online: VoxelGrid,
                  surfaces: SurfaceSet) -> float:
    """Sum of weights over surface cells visible inside the frustum at the
    given yaw.  Raises ValueError when the position leaves the map."""
    if not online.in_bounds_point(position):
        raise ValueError("scoring position outside grid bounds")
    visible, bearing, elev = _visibility_and_geometry(position, online,
                                                      surfaces, camera)
    mask = visible.copy()
    mask &= np.abs(wrap_angle(bearing - angle)) <= camera.fov_h / 2 + 1e-12
    mask &= np.abs(elev) <= camera.fov_v / 2 + 1e-12
    return float(wgrid.weights[mask].sum())


def best_view_angle(position, angles: np.ndarray, camera: CameraModel,
                    wgrid: WeightGrid, online: VoxelGrid, surfaces: SurfaceSet,
                    current_yaw: float) -> tuple[float, float]:
    """Argmax of raycast_score over candidate angles.

    Visibility is computed once (it does not depend on yaw), then each
    candidate sums weights over its frustum.  Ties prefer the smallest
    wrapped deviation from the current yaw, then the smallest angle.
    """
    if not online.in_bounds_point(position):
        raise ValueError("scoring position outside grid bounds")
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise ValueError("need at least one candidate angle")
    visible, bearing, elev = _visibility_and_geometry(position, online,
                                                      surfaces, camera)
    base = visible & (np.abs(elev) <= camera.fov_v / 2 + 1e-12)
    best = None
    for angle in angles:
        mask = base & (np.abs(wrap_angle(bearing - angle))
                       <= camera.fov_h / 2 + 1e-12)
        score = float(wgrid.weights[mask].sum())
        key = (-score, abs(float(wrap_angle(angle - current_yaw))), float(angle))
        if best is None or key < best[0]:
            best = (key, float(angle), score)
    return best[1], best[2]
