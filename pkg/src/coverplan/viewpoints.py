"""Standoff viewpoint generation and coverage closure checking."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .segmentation import Segment
from .world import (FREE, CameraModel, SurfaceSet, VoxelGrid, frustum_mask,
                    visible_targets, wrap_angle)


class ViewpointStatus(enum.Enum):
    PENDING = "pending"
    VISITED = "visited"
    BLOCKED = "blocked"
    ADAPTED = "adapted"
    ABANDONED = "abandoned"


@dataclass
class Viewpoint:
    id: int
    position: np.ndarray
    yaw: float
    segment_id: int
    covered_rows: np.ndarray
    status: ViewpointStatus = ViewpointStatus.PENDING

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.covered_rows = np.asarray(self.covered_rows, dtype=np.int64)


def nominal_coverage(position, yaw: float, camera: CameraModel, grid: VoxelGrid,
                     surfaces: SurfaceSet, candidate_rows: np.ndarray | None = None,
                     opaque_mask: np.ndarray | None = None) -> np.ndarray:
    """Surface rows a camera pose can actually scan in the reference map.

    A cell counts when it sits inside the frustum, its center is visible
    along an unobstructed ray and the viewing ray meets the surface within
    the incidence limit.
    """
    rows = (np.arange(len(surfaces)) if candidate_rows is None
            else np.asarray(candidate_rows, dtype=np.int64))
    if rows.size == 0 or not grid.in_bounds_point(position):
        return np.zeros(0, dtype=np.int64)
    centers = surfaces.centers(grid)[rows]
    ok, delta, dist = frustum_mask(position, yaw, camera, centers)
    if surfaces.normals is not None:
        cos_inc = -np.einsum("ij,ij->i", delta, surfaces.normals[rows])
        with np.errstate(invalid="ignore"):
            cos_inc = np.where(dist > 1e-9, cos_inc / np.maximum(dist, 1e-9), 1.0)
        ok &= cos_inc >= math.cos(camera.max_incidence) - 1e-12
    rows = rows[ok]
    if rows.size == 0:
        return rows
    vis = visible_targets(grid, position, surfaces.cells[rows],
                          opaque_mask=opaque_mask)
    return rows[vis]


def _viewpoint_frame(segment: Segment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal frame (normal, sweep axis, stack axis) for a segment."""
    normal = segment.mean_normal / np.linalg.norm(segment.mean_normal)
    principal = segment.principal_axis
    sweep = principal - (principal @ normal) * normal
    if np.linalg.norm(sweep) < 1e-9:
        fallback = np.array([1.0, 0.0, 0.0])
        if abs(normal @ fallback) > 0.9:
            fallback = np.array([0.0, 1.0, 0.0])
        sweep = fallback - (fallback @ normal) * normal
    sweep = sweep / np.linalg.norm(sweep)
    stack = np.cross(normal, sweep)
    return normal, sweep, stack


def _line_offsets(extent: float, footprint_half: float, overlap: float) -> np.ndarray:
    """Centered station offsets so overlapping footprints span the extent."""
    span = 2 * extent
    if span <= 2 * footprint_half + 1e-12:
        return np.array([0.0])
    spacing = 2 * footprint_half * (1 - overlap)
    count = max(1, math.ceil(span / spacing))
    return (np.arange(count) - (count - 1) / 2) * spacing


def generate_viewpoints(segment: Segment, surfaces: SurfaceSet, grid: VoxelGrid,
                        camera: CameraModel, standoff: float, overlap: float,
                        id_start: int = 0) -> tuple[list[Viewpoint], list[str]]:
    """Place standoff viewpoints along a segment face.

    Stations step along the segment's principal direction with spacing
    2 * standoff * tan(fov_h / 2) * (1 - overlap); rows stack along the
    secondary direction using the vertical field of view.  Positions whose
    cell is not free are nudged outward along the normal up to twice the
    standoff, then dropped with a warning.  Viewpoints that end up covering
    nothing are dropped as well.
    """
    if segment.bbox is None or segment.principal_axis is None:
        raise ValueError("segment needs a fitted bounding box")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    if standoff <= 0:
        raise ValueError("standoff must be positive")

    normal, sweep, stack = _viewpoint_frame(segment)
    pts = surfaces.centers(grid)[segment.rows]
    anchor = pts.mean(axis=0)
    rel = pts - anchor
    sweep_extent = float(np.abs(rel @ sweep).max()) if len(pts) > 1 else 0.0
    stack_extent = float(np.abs(rel @ stack).max()) if len(pts) > 1 else 0.0

    sweep_offsets = _line_offsets(sweep_extent, standoff * math.tan(camera.fov_h / 2),
                                  overlap)
    stack_offsets = _line_offsets(stack_extent, standoff * math.tan(camera.fov_v / 2),
                                  overlap)

    horiz = math.hypot(normal[0], normal[1])
    yaw = math.atan2(-normal[1], -normal[0]) if horiz > 1e-9 else 0.0
    yaw = float(wrap_angle(yaw))

    viewpoints: list[Viewpoint] = []
    warnings: list[str] = []
    vid = id_start
    for row_off in stack_offsets:
        for sweep_off in sweep_offsets:
            base = anchor + standoff * normal + sweep_off * sweep + row_off * stack
            position = _nudge_free(grid, base, normal, standoff)
            if position is None:
                warnings.append(
                    f"segment {segment.id}: dropped viewpoint at offset "
                    f"({sweep_off:.2f}, {row_off:.2f}), no free cell within "
                    f"2x standoff")
                continue
            covered = nominal_coverage(position, yaw, camera, grid, surfaces,
                                       candidate_rows=segment.rows)
            if covered.size == 0:
                warnings.append(
                    f"segment {segment.id}: dropped viewpoint at offset "
                    f"({sweep_off:.2f}, {row_off:.2f}), covers no surface cells")
                continue
            viewpoints.append(Viewpoint(vid, position, yaw, segment.id, covered))
            vid += 1
    return viewpoints, warnings


def _nudge_free(grid: VoxelGrid, base: np.ndarray, normal: np.ndarray,
                standoff: float) -> np.ndarray | None:
    step = grid.resolution / 2
    extra = 0.0
    while extra <= standoff + 1e-9:
        candidate = base + extra * normal
        if grid.in_bounds_point(candidate) and grid.state_at(candidate) == FREE:
            return candidate
        extra += step
    return None


def coverage_closure_check(viewpoints: list[Viewpoint],
                           surfaces: SurfaceSet) -> np.ndarray:
    """Surface rows not covered by any viewpoint's nominal footprint."""
    if not viewpoints:
        return np.arange(len(surfaces), dtype=np.int64)
    covered = np.zeros(len(surfaces), dtype=bool)
    for vp in viewpoints:
        covered[vp.covered_rows] = True
    return np.nonzero(~covered)[0].astype(np.int64)


def plan_viewpoints(grid: VoxelGrid, surfaces: SurfaceSet, segments: list[Segment],
                    camera: CameraModel, standoff: float, overlap: float
                    ) -> tuple[list[Viewpoint], np.ndarray, list[str]]:
    """Generate viewpoints for every segment and close coverage gaps.

    Segments that leave uncovered cells after the first pass get one
    densified retry (overlap raised by 0.25); retry viewpoints are kept only
    when they add previously uncovered cells, so the uncovered set can only
    shrink.
    """
    viewpoints: list[Viewpoint] = []
    warnings: list[str] = []
    for segment in segments:
        vps, warns = generate_viewpoints(segment, surfaces, grid, camera,
                                         standoff, overlap,
                                         id_start=len(viewpoints))
        viewpoints.extend(vps)
        warnings.extend(warns)

    uncovered = coverage_closure_check(viewpoints, surfaces)
    if uncovered.size:
        uncovered_set = set(uncovered.tolist())
        row_segment = {}
        for segment in segments:
            for row in segment.rows:
                row_segment[int(row)] = segment.id
        retry_ids = sorted({row_segment[r] for r in uncovered_set if r in row_segment})
        dense_overlap = min(overlap + 0.25, 0.95)
        for segment in segments:
            if segment.id not in retry_ids:
                continue
            extra, warns = generate_viewpoints(segment, surfaces, grid, camera,
                                               standoff, dense_overlap,
                                               id_start=len(viewpoints))
            warnings.extend(warns)
            for vp in extra:
                gained = [r for r in vp.covered_rows.tolist() if r in uncovered_set]
                if not gained:
                    continue
                vp.id = len(viewpoints)
                viewpoints.append(vp)
                uncovered_set.difference_update(gained)
        uncovered = coverage_closure_check(viewpoints, surfaces)
    return viewpoints, uncovered, warnings
