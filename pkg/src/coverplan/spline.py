"""Static trajectory generation: guide paths and optimized B-splines.

Trajectories are clamped uniform cubic B-splines over 3-d control points.
The optimizer runs plain gradient descent with Armijo backtracking on a
sum of control-polygon acceleration, jerk and obstacle-clearance penalties;
all three terms are functions of the control points alone.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .world import (FREE, OCCUPIED, UnreachableError, VoxelGrid,
                    sample_field, sample_field_gradient)


@dataclass
class CostWeights:
    control: float = 1.0
    smooth: float = 1.0
    static: float = 10.0
    safe_distance: float = 0.5


@dataclass
class BSplineTrajectory:
    """Clamped uniform B-spline; degree-many knots repeat at each end.

    The first and last (degree - 1) control points are fixed: with a cubic
    this pins the end positions and zeroes the end velocities no matter how
    the interior points move.  Treated as immutable after construction.
    """

    controls: np.ndarray
    dt: float
    degree: int = 3

    def __post_init__(self):
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1, 3)
        if len(self.controls) < 2 * self.degree:
            raise ValueError("need at least 2 * degree control points")
        if self.dt <= 0:
            raise ValueError("knot interval must be positive")
        self._splines = None

    @property
    def n_fixed(self) -> int:
        return self.degree - 1

    @property
    def duration(self) -> float:
        return (len(self.controls) - self.degree) * self.dt

    def knots(self) -> np.ndarray:
        n, k = len(self.controls), self.degree
        inner = np.arange(1, n - k) * self.dt
        return np.concatenate([np.zeros(k + 1), inner,
                               np.full(k + 1, (n - k) * self.dt)])

    def _get_splines(self):
        if self._splines is None:
            base = BSpline(self.knots(), self.controls, self.degree,
                           extrapolate=False)
            vel = base.derivative(1)
            acc = base.derivative(2)
            self._splines = (base, vel, acc)
        return self._splines

    def sample(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, velocity and acceleration at time(s) t, clamped to the
        trajectory domain."""
        base, vel, acc = self._get_splines()
        tt = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        return base(tt), vel(tt), acc(tt)

    def with_controls(self, controls: np.ndarray) -> "BSplineTrajectory":
        return BSplineTrajectory(controls, self.dt, self.degree)


# ---------- guide path ----------

_STEP_OFFSETS = np.array(
    [(dx, dy, dz)
     for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
     if (dx, dy, dz) != (0, 0, 0)], dtype=np.int64)
_STEP_COSTS = np.linalg.norm(_STEP_OFFSETS.astype(float), axis=1)


def _segment_clear(grid: VoxelGrid, esdf: np.ndarray, a: np.ndarray,
                   b: np.ndarray, clearance: float) -> bool:
    d = float(np.linalg.norm(b - a))
    n = max(2, int(math.ceil(d / (grid.resolution / 2))) + 1)
    ts = np.linspace(0.0, 1.0, n)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    vals = sample_field(esdf, grid, pts)
    return bool(np.all(vals >= clearance - 1e-9))


def init_guide_path(grid: VoxelGrid, esdf: np.ndarray, start, goal,
                    clearance: float) -> np.ndarray:
    """Collision-free polyline from start to goal.

    Tries the straight segment first, then an A* search over the
    26-connected lattice restricted to cells with enough clearance, followed
    by greedy line-of-sight shortcutting.  Raises UnreachableError when no
    route exists.
    """
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    for name, p in (("start", start), ("goal", goal)):
        if not grid.in_bounds_point(p):
            raise UnreachableError(f"guide path {name} outside grid bounds")
        if grid.state_at(p) == OCCUPIED:
            raise UnreachableError(f"guide path {name} lies in an occupied cell")

    if _segment_clear(grid, esdf, start, goal, clearance):
        return np.vstack([start, goal])

    traversable = (grid.cells != OCCUPIED) & (esdf >= clearance)
    s_idx = tuple(grid.world_to_index(start))
    g_idx = tuple(grid.world_to_index(goal))
    for name, idx in (("start", s_idx), ("goal", g_idx)):
        if not traversable[idx]:
            raise UnreachableError(
                f"guide path {name} cell {list(idx)} has insufficient clearance")

    cell_path = _astar(traversable, s_idx, g_idx, grid.resolution)
    if cell_path is None:
        raise UnreachableError(
            f"no traversable route from {start.tolist()} to {goal.tolist()}")

    waypoints = [start]
    for idx in cell_path[1:-1]:
        waypoints.append(grid.index_to_center(np.array(idx)))
    waypoints.append(goal)
    return _shortcut(grid, esdf, np.array(waypoints), clearance)


def _astar(traversable: np.ndarray, start_idx, goal_idx, resolution: float):
    dims = traversable.shape
    goal_arr = np.array(goal_idx, dtype=float)

    def heuristic(idx) -> float:
        return float(np.linalg.norm(np.array(idx, dtype=float) - goal_arr))

    g_score = {start_idx: 0.0}
    came: dict[tuple, tuple] = {}
    counter = 0
    open_heap = [(heuristic(start_idx), 0.0, counter, start_idx)]
    closed = set()
    while open_heap:
        f, g, _, current = heapq.heappop(open_heap)
        if current in closed:
            continue
        if current == goal_idx:
            path = [current]
            while current in came:
                current = came[current]
                path.append(current)
            path.reverse()
            return path
        closed.add(current)
        ci, cj, ck = current
        for off, cost in zip(_STEP_OFFSETS, _STEP_COSTS):
            ni, nj, nk = ci + off[0], cj + off[1], ck + off[2]
            if not (0 <= ni < dims[0] and 0 <= nj < dims[1] and 0 <= nk < dims[2]):
                continue
            if not traversable[ni, nj, nk]:
                continue
            nxt = (ni, nj, nk)
            tentative = g + cost
            if tentative < g_score.get(nxt, math.inf) - 1e-12:
                g_score[nxt] = tentative
                came[nxt] = current
                counter += 1
                heapq.heappush(open_heap,
                               (tentative + heuristic(nxt), tentative, counter, nxt))
    return None


def _shortcut(grid: VoxelGrid, esdf: np.ndarray, waypoints: np.ndarray,
              clearance: float) -> np.ndarray:
    """Greedy line-of-sight pruning of a waypoint polyline."""
    kept = [waypoints[0]]
    i = 0
    n = len(waypoints)
    while i < n - 1:
        j = n - 1
        while j > i + 1 and not _segment_clear(grid, esdf, waypoints[i],
                                               waypoints[j], clearance):
            j -= 1
        kept.append(waypoints[j])
        i = j
    return np.array(kept)


# ---------- spline fitting and optimization ----------


def polyline_length(points: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def _polyline_sample(points: np.ndarray, fractions: np.ndarray) -> np.ndarray:
    seg = np.diff(points, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    total = seg_len.sum()
    if total <= 1e-12:
        return np.repeat(points[:1], len(fractions), axis=0)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = fractions * total
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[idx]) / np.where(seg_len[idx] > 0, seg_len[idx], 1.0)
    return points[idx] + frac[:, None] * seg[idx]


def fit_initial_controls(polyline: np.ndarray, dt: float, cruise_speed: float,
                         degree: int = 3) -> BSplineTrajectory:
    """Seed a trajectory from a guide polyline.

    The control count scales with path length over cruise speed so the
    spline roughly keeps that pace; both ends carry (degree - 1) repeated
    control points for the clamp.
    """
    polyline = np.asarray(polyline, dtype=float).reshape(-1, 3)
    length = polyline_length(polyline)
    k = degree
    n = max(2 * k, int(math.ceil(length / (cruise_speed * dt))) + 2 * (k - 1))
    n_interior = n - 2 * (k - 1)
    fracs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = _polyline_sample(polyline, fracs)
    start = np.repeat(polyline[:1], k - 1, axis=0)
    goal = np.repeat(polyline[-1:], k - 1, axis=0)
    return BSplineTrajectory(np.vstack([start, interior, goal]), dt, degree)


def trajectory_costs(controls: np.ndarray, weights: CostWeights, grid: VoxelGrid,
                     esdf: np.ndarray, dt: float) -> dict[str, float]:
    ctrl = np.asarray(controls, dtype=float)
    d2 = ctrl[2:] - 2 * ctrl[1:-1] + ctrl[:-2]
    j_control = float((d2 ** 2).sum()) / dt ** 4
    d3 = ctrl[3:] - 3 * ctrl[2:-1] + 3 * ctrl[1:-2] - ctrl[:-3]
    j_smooth = float((d3 ** 2).sum()) / dt ** 6
    dist = sample_field(esdf, grid, ctrl)
    viol = np.maximum(0.0, weights.safe_distance - dist)
    j_static = float((viol ** 2).sum())
    return {"control": j_control, "smooth": j_smooth, "static": j_static,
            "total": (weights.control * j_control + weights.smooth * j_smooth
                      + weights.static * j_static)}


def cost_and_gradient(controls: np.ndarray, weights: CostWeights,
                      grid: VoxelGrid, esdf: np.ndarray, dt: float,
                      n_fixed: int) -> tuple[float, np.ndarray, dict]:
    """Total cost and its gradient with respect to the control points.

    Gradient rows of the fixed prefix and suffix are zeroed so the endpoint
    clamp survives optimization untouched.
    """
    ctrl = np.asarray(controls, dtype=float)
    n = len(ctrl)
    grad = np.zeros_like(ctrl)

    d2 = ctrl[2:] - 2 * ctrl[1:-1] + ctrl[:-2]
    j_control = float((d2 ** 2).sum()) / dt ** 4
    g2 = 2.0 * d2 / dt ** 4
    grad[2:] += g2
    grad[1:-1] -= 2 * g2
    grad[:-2] += g2

    d3 = ctrl[3:] - 3 * ctrl[2:-1] + 3 * ctrl[1:-2] - ctrl[:-3]
    j_smooth = float((d3 ** 2).sum()) / dt ** 6
    g3 = 2.0 * d3 / dt ** 6
    grad_smooth = np.zeros_like(ctrl)
    grad_smooth[3:] += g3
    grad_smooth[2:-1] -= 3 * g3
    grad_smooth[1:-2] += 3 * g3
    grad_smooth[:-3] -= g3

    dist, dgrad = sample_field_gradient(esdf, grid, ctrl)
    viol = np.maximum(0.0, weights.safe_distance - dist)
    j_static = float((viol ** 2).sum())
    grad_static = -2.0 * viol[:, None] * dgrad

    total = (weights.control * j_control + weights.smooth * j_smooth
             + weights.static * j_static)
    full_grad = (weights.control * grad + weights.smooth * grad_smooth
                 + weights.static * grad_static)
    full_grad[:n_fixed] = 0.0
    full_grad[n - n_fixed:] = 0.0
    terms = {"control": j_control, "smooth": j_smooth, "static": j_static,
             "total": total}
    return total, full_grad, terms


def optimize(traj: BSplineTrajectory, weights: CostWeights, grid: VoxelGrid,
             esdf: np.ndarray, max_iters: int = 200,
             grad_tol: float = 1e-4) -> tuple[BSplineTrajectory, dict]:
    """Gradient descent with Armijo backtracking over interior controls.

    Stops when the infinity norm of the gradient drops below grad_tol or
    the iteration budget runs out.  Accepted cost values never increase.
    """
    ctrl = traj.controls.copy()
    n_fixed = traj.n_fixed

    cost, grad, terms = cost_and_gradient(ctrl, weights, grid, esdf,
                                          traj.dt, n_fixed)
    if not math.isfinite(cost):
        ctrl = _clamp_to_grid(ctrl, grid, n_fixed)
        cost, grad, terms = cost_and_gradient(ctrl, weights, grid, esdf,
                                              traj.dt, n_fixed)
        if not math.isfinite(cost):
            raise RuntimeError("trajectory cost is not finite after clamping")

    history = [cost]
    step = 1.0
    armijo_c = 1e-4
    iterations = 0
    for iterations in range(1, max_iters + 1):
        gnorm = float(np.abs(grad).max()) if grad.size else 0.0
        if gnorm < grad_tol:
            iterations -= 1
            break
        gsq = float((grad ** 2).sum())
        alpha = min(step * 2.0, 1.0)
        accepted = False
        while alpha > 1e-14:
            candidate = ctrl - alpha * grad
            new_cost, new_grad, new_terms = cost_and_gradient(
                candidate, weights, grid, esdf, traj.dt, n_fixed)
            if math.isfinite(new_cost) and new_cost <= cost - armijo_c * alpha * gsq:
                ctrl, cost, grad, terms = candidate, new_cost, new_grad, new_terms
                step = alpha
                history.append(cost)
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break

    info = {"iterations": iterations, "cost_history": history, "terms": terms,
            "grad_inf_norm": float(np.abs(grad).max()) if grad.size else 0.0}
    return traj.with_controls(ctrl), info


def _clamp_to_grid(controls: np.ndarray, grid: VoxelGrid,
                   n_fixed: int) -> np.ndarray:
    lo = grid.origin + grid.resolution * 0.5
    hi = grid.max_corner - grid.resolution * 0.5
    out = controls.copy()
    out[n_fixed:-n_fixed] = np.clip(out[n_fixed:-n_fixed], lo, hi)
    return out


def plan_static_trajectory(grid: VoxelGrid, esdf: np.ndarray, start, goal, *,
                           clearance: float, dt: float, cruise_speed: float,
                           weights: CostWeights, max_iters: int = 200
                           ) -> tuple[BSplineTrajectory, dict]:
    """Guide path, spline seeding and optimization in one call."""
    guide = init_guide_path(grid, esdf, start, goal, clearance)
    seed = fit_initial_controls(guide, dt, cruise_speed)
    traj, info = optimize(seed, weights, grid, esdf, max_iters=max_iters)
    info["guide_waypoints"] = guide
    return traj, info
