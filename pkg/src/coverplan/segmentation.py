"""Surface normal estimation and region-growing segmentation."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .world import FREE, SurfaceSet, VoxelGrid

_TIEBREAK = np.array([1.0, 1e-3, 1e-6])

_NEIGHBOR_OFFSETS = np.array(
    [(dx, dy, dz)
     for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
     if (dx, dy, dz) != (0, 0, 0)], dtype=np.int64)


@dataclass
class OrientedBox:
    """PCA-aligned box: axes are unit row vectors sorted by extent."""

    center: np.ndarray
    axes: np.ndarray
    half_extents: np.ndarray


@dataclass
class Segment:
    id: int
    rows: np.ndarray
    mean_normal: np.ndarray
    flagged: bool = False
    bbox: OrientedBox | None = None
    principal_axis: np.ndarray | None = None

    def cells(self, surfaces: SurfaceSet) -> np.ndarray:
        return surfaces.cells[self.rows]


def _free_direction(grid: VoxelGrid, cell: np.ndarray) -> np.ndarray:
    """Mean direction toward adjacent free cells; zero if none."""
    neighbors = cell[None, :] + _NEIGHBOR_OFFSETS
    ok = grid.index_in_bounds(neighbors)
    neighbors = neighbors[ok]
    states = grid.cells[neighbors[:, 0], neighbors[:, 1], neighbors[:, 2]]
    free = _NEIGHBOR_OFFSETS[ok][states == FREE].astype(float)
    if len(free) == 0:
        return np.zeros(3)
    free = free / np.linalg.norm(free, axis=1)[:, None]
    return free.sum(axis=0)


def estimate_normals(grid: VoxelGrid, surfaces: SurfaceSet,
                     radius: float) -> SurfaceSet:
    """Estimate per-cell normals and a curvature proxy from local PCA.

    The normal is the smallest-eigenvalue direction of the covariance of
    neighboring surface cell centers, oriented toward adjacent free space.
    Curvature is lambda_min over the eigenvalue sum (0 for perfect planes).
    Cells with fewer than 3 neighbors fall back to the free-space direction.
    """
    if radius < grid.resolution:
        raise ValueError("normal estimation radius must cover at least one cell")
    n = len(surfaces)
    if n == 0:
        return SurfaceSet(surfaces.cells.copy(), np.zeros((0, 3)), np.zeros(0))

    centers = surfaces.centers(grid)
    tree = cKDTree(centers)
    neighbor_lists = tree.query_ball_point(centers, r=radius)

    normals = np.zeros((n, 3))
    curvatures = np.zeros(n)
    needs_eig = []
    covs = []
    for i, nbrs in enumerate(neighbor_lists):
        if len(nbrs) < 3:
            free_dir = _free_direction(grid, surfaces.cells[i])
            norm = np.linalg.norm(free_dir)
            normals[i] = free_dir / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
            curvatures[i] = 0.0
            continue
        pts = centers[nbrs]
        rel = pts - pts.mean(axis=0)
        covs.append(rel.T @ rel / len(nbrs))
        needs_eig.append(i)

    if needs_eig:
        eigvals, eigvecs = np.linalg.eigh(np.stack(covs))
        for pos, i in enumerate(needs_eig):
            w = eigvals[pos]
            normal = eigvecs[pos][:, 0]
            total = float(w.sum())
            curvatures[i] = float(w[0] / total) if total > 1e-15 else 0.0
            free_dir = _free_direction(grid, surfaces.cells[i])
            if np.linalg.norm(free_dir) > 1e-9:
                if normal @ free_dir < 0:
                    normal = -normal
            elif normal @ _TIEBREAK < 0:
                normal = -normal
            normals[i] = normal / np.linalg.norm(normal)

    return SurfaceSet(surfaces.cells.copy(), normals, curvatures)


def _adjacency(grid: VoxelGrid, surfaces: SurfaceSet) -> list[np.ndarray]:
    """26-neighborhood adjacency among surface cells, as row index lists."""
    lookup = surfaces.row_lookup(grid)
    dims = np.array(grid.dims)
    adj = []
    for cell in surfaces.cells:
        nbrs = cell[None, :] + _NEIGHBOR_OFFSETS
        ok = np.all((nbrs >= 0) & (nbrs < dims[None, :]), axis=1)
        nbrs = nbrs[ok]
        flat = (nbrs[:, 0] * dims[1] + nbrs[:, 1]) * dims[2] + nbrs[:, 2]
        rows = lookup[flat]
        adj.append(rows[rows >= 0])
    return adj


def region_grow(grid: VoxelGrid, surfaces: SurfaceSet,
                angle_thresh: float, curvature_thresh: float,
                min_size: int) -> list[Segment]:
    """Partition surface cells into normal-coherent segments.

    Seeds are picked lowest-curvature-first.  A neighbor joins a region when
    its normal is within angle_thresh of the seed normal and its curvature is
    below curvature_thresh.  Segments smaller than min_size are merged into
    the adjacent segment with the most similar mean normal; merged segments
    are flagged because their coherence bound no longer applies.
    """
    if surfaces.normals is None or surfaces.curvatures is None:
        raise ValueError("region growing needs estimated normals and curvatures")
    n = len(surfaces)
    if n == 0:
        return []

    adjacency = _adjacency(grid, surfaces)
    cos_thresh = np.cos(angle_thresh)
    normals = surfaces.normals
    flats = (surfaces.cells[:, 0] * grid.dims[1]
             + surfaces.cells[:, 1]) * grid.dims[2] + surfaces.cells[:, 2]
    seed_order = np.lexsort((flats, surfaces.curvatures))

    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for seed in seed_order:
        if labels[seed] >= 0:
            continue
        seed_normal = normals[seed]
        labels[seed] = next_label
        queue = deque([seed])
        while queue:
            row = queue.popleft()
            for nbr in adjacency[row]:
                if labels[nbr] >= 0:
                    continue
                if surfaces.curvatures[nbr] > curvature_thresh:
                    continue
                if normals[nbr] @ seed_normal < cos_thresh:
                    continue
                labels[nbr] = next_label
                queue.append(nbr)
        next_label += 1

    segments: dict[int, Segment] = {}
    for label in range(next_label):
        rows = np.nonzero(labels == label)[0]
        segments[label] = Segment(label, rows, _mean_normal(normals[rows]))

    _merge_small(segments, labels, adjacency, normals, min_size)

    out = []
    for new_id, label in enumerate(sorted(segments)):
        seg = segments[label]
        seg.id = new_id
        if not seg.flagged:
            cos_dev = normals[seg.rows] @ seg.mean_normal
            if np.any(cos_dev < cos_thresh - 1e-12):
                seg.flagged = True
        out.append(seg)
    return out


def _mean_normal(member_normals: np.ndarray) -> np.ndarray:
    total = member_normals.sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        return member_normals[0].copy()
    return total / norm


def _merge_small(segments: dict[int, Segment], labels: np.ndarray,
                 adjacency: list[np.ndarray], normals: np.ndarray, min_size: int):
    changed = True
    while changed:
        changed = False
        small = sorted((label for label, seg in segments.items()
                        if len(seg.rows) < min_size),
                       key=lambda l: (len(segments[l].rows), l))
        for label in small:
            seg = segments.get(label)
            if seg is None or len(seg.rows) >= min_size:
                continue
            neighbor_labels = set()
            for row in seg.rows:
                for nbr in adjacency[row]:
                    other = labels[nbr]
                    if other != label:
                        neighbor_labels.add(int(other))
            if not neighbor_labels:
                seg.flagged = True
                continue
            best = max(sorted(neighbor_labels),
                       key=lambda l: (segments[l].mean_normal @ seg.mean_normal, -l))
            target = segments[best]
            target.rows = np.sort(np.concatenate([target.rows, seg.rows]))
            labels[seg.rows] = best
            target.mean_normal = _mean_normal(normals[target.rows])
            target.flagged = True
            del segments[label]
            changed = True
            break


def fit_bbox(segment: Segment, surfaces: SurfaceSet, grid: VoxelGrid) -> Segment:
    """Attach a PCA-oriented bounding box and principal axis to a segment.

    Axes are sorted by extent (largest first) and sign-disambiguated with a
    fixed tie-break vector so repeated runs agree bit for bit.  Extents cover
    all member cell centers and are floored at half a cell so the box never
    collapses entirely.
    """
    pts = surfaces.centers(grid)[segment.rows]
    center = pts.mean(axis=0)
    half_res = grid.resolution / 2
    if len(pts) == 1:
        segment.bbox = OrientedBox(center, np.eye(3), np.full(3, half_res))
        segment.principal_axis = np.array([1.0, 0.0, 0.0])
        return segment

    rel = pts - center
    cov = rel.T @ rel / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    axes = eigvecs.T[::-1].copy()
    for i in range(3):
        if axes[i] @ _TIEBREAK < 0:
            axes[i] = -axes[i]

    proj = rel @ axes.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    half = np.maximum((hi - lo) / 2, half_res)
    mid = (hi + lo) / 2
    box_center = center + axes.T @ mid

    order = np.argsort(-half, kind="stable")
    axes = axes[order]
    half = half[order]
    segment.bbox = OrientedBox(box_center, axes, half)
    segment.principal_axis = axes[0].copy()
    return segment


def segment_surface(grid: VoxelGrid, surfaces: SurfaceSet, *, normal_radius: float,
                    angle_thresh: float, curvature_thresh: float,
                    min_size: int) -> tuple[SurfaceSet, list[Segment]]:
    """Full surface analysis pipeline: normals, regions, bounding boxes."""
    annotated = estimate_normals(grid, surfaces, normal_radius)
    segments = region_grow(grid, annotated, angle_thresh, curvature_thresh, min_size)
    for seg in segments:
        fit_bbox(seg, annotated, grid)
    return annotated, segments
