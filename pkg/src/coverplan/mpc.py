"""Receding-horizon tracking control with obstacle avoidance.

The plant is a discrete double integrator.  Collision constraints are
linearized around the previous iterate (distance-field tangent planes for
static geometry, sphere tangent planes for moving obstacles) and folded in
as quadratic penalties whose weight doubles every outer iteration; the
inner problem is solved by projected gradient descent with the control box
as the projection set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import VoxelGrid, sample_field, sample_field_gradient


@dataclass
class RobotState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "RobotState":
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(x[:3].copy(), x[3:].copy())


@dataclass
class MpcConfig:
    horizon: int = 20
    dt: float = 0.1
    control_weight: float = 0.1
    pos_weight: float = 1.0
    vel_weight: float = 1.0
    accel_limit: float = 2.0
    robot_radius: float = 0.3
    static_margin: float = 0.2
    dynamic_margin: float = 0.1
    obstacle_growth: float = 0.05
    penalty_init: float = 10.0
    max_outer_iters: int = 5
    max_inner_iters: int = 40
    step_tol: float = 1e-3


@dataclass
class ObstaclePrediction:
    """Per-step bounding spheres for one obstacle over the horizon."""

    centers: np.ndarray
    radii: np.ndarray


@dataclass
class MpcSolution:
    states: np.ndarray
    controls: np.ndarray
    feasible: bool
    objective: float
    violation_history: list[float] = field(default_factory=list)


def predict_dynamics(state: RobotState, accel, dt: float) -> RobotState:
    """One exact step of the discrete double integrator."""
    a = np.asarray(accel, dtype=float).reshape(3)
    pos = state.position + state.velocity * dt + 0.5 * a * dt * dt
    vel = state.velocity + a * dt
    return RobotState(pos, vel)


def rollout(state: RobotState, controls: np.ndarray, dt: float) -> np.ndarray:
    """States (horizon + 1, 6) produced by a control sequence."""
    n = len(controls)
    states = np.zeros((n + 1, 6))
    states[0] = state.as_vector()
    cur = state
    for k in range(n):
        cur = predict_dynamics(cur, controls[k], dt)
        states[k + 1] = cur.as_vector()
    return states


def predict_obstacles(obstacles, t_now: float, horizon: int, dt: float,
                      robot_radius: float, dynamic_margin: float,
                      growth: float) -> list[ObstaclePrediction]:
    """Constant-velocity sphere forecasts with per-step inflation.

    Each obstacle becomes a bounding sphere swept along its current
    waypoint-segment velocity; the radius already includes the robot radius
    and dynamic margin, and grows by a fixed amount per step to absorb
    prediction error.
    """
    steps = np.arange(horizon + 1)
    out = []
    for obs in obstacles:
        center = obs.center_at(t_now)
        velocity = obs.velocity_at(t_now)
        centers = center[None, :] + steps[:, None] * dt * velocity[None, :]
        base = obs.bounding_radius() + robot_radius + dynamic_margin
        radii = base + growth * steps
        out.append(ObstaclePrediction(centers, radii))
    return out


def _tracking_cost_grad(states: np.ndarray, controls: np.ndarray,
                        reference: np.ndarray, cfg: MpcConfig):
    w = np.concatenate([np.full(3, cfg.pos_weight), np.full(3, cfg.vel_weight)])
    err = states - reference
    cost = float((w[None, :] * err ** 2).sum())
    cost += cfg.control_weight * float((controls ** 2).sum())
    dstate = 2.0 * w[None, :] * err
    dcontrol = 2.0 * cfg.control_weight * controls
    return cost, dstate, dcontrol


def _penalty_cost_grad(states: np.ndarray, planes_static, planes_dynamic,
                       penalty: float):
    """Quadratic hinge penalties on linearized half-space constraints.

    planes_static: (normal_k, offset_k) with constraint n . p_k >= offset.
    planes_dynamic: list of (k, normal, offset) triples.
    """
    cost = 0.0
    dstate = np.zeros_like(states)
    if planes_static is not None:
        normals, offsets = planes_static
        margin = offsets - np.einsum("kj,kj->k", normals, states[:, :3])
        viol = np.maximum(0.0, margin)
        cost += penalty * float((viol ** 2).sum())
        dstate[:, :3] += penalty * (-2.0 * viol[:, None] * normals)
    for k, normal, offset in planes_dynamic:
        margin = offset - float(normal @ states[k, :3])
        if margin > 0:
            cost += penalty * margin * margin
            dstate[k, :3] += penalty * (-2.0 * margin * normal)
    return cost, dstate


def _controls_gradient(dstate: np.ndarray, dcontrol: np.ndarray,
                       cfg: MpcConfig) -> np.ndarray:
    """Chain rule through the rollout (adjoint recursion)."""
    n = len(dcontrol)
    dt = cfg.dt
    a_mat = np.eye(6)
    a_mat[:3, 3:] = dt * np.eye(3)
    b_mat = np.zeros((6, 3))
    b_mat[:3] = 0.5 * dt * dt * np.eye(3)
    b_mat[3:] = dt * np.eye(3)

    grad = np.zeros((n, 3))
    lam = dstate[n].copy()
    for k in range(n - 1, -1, -1):
        grad[k] = dcontrol[k] + b_mat.T @ lam
        lam = dstate[k] + a_mat.T @ lam
    return grad


def _linearize_static(states: np.ndarray, grid, esdf, cfg: MpcConfig):
    if grid is None or esdf is None:
        return None
    pos = states[:, :3]
    vals, grads = sample_field_gradient(esdf, grid, pos)
    norms = np.linalg.norm(grads, axis=1)
    safe = norms > 1e-9
    normals = np.where(safe[:, None], grads / np.maximum(norms, 1e-9)[:, None],
                       np.array([[0.0, 0.0, 1.0]]))
    r_min = cfg.robot_radius + cfg.static_margin
    # constraint: d(p_bar) + n . (p - p_bar) >= r_min
    offsets = r_min - vals + np.einsum("kj,kj->k", normals, pos)
    # rows with no usable gradient and enough clearance impose nothing
    inactive = (~safe) & (vals >= r_min)
    offsets[inactive] = -1e18
    return normals, offsets


def _linearize_dynamic(states: np.ndarray, predictions, cfg: MpcConfig):
    planes = []
    for pred in predictions:
        for k in range(len(states)):
            rel = states[k, :3] - pred.centers[k]
            dist = float(np.linalg.norm(rel))
            r_needed = float(pred.radii[k])
            if dist > r_needed + 1.0:
                continue
            normal = rel / dist if dist > 1e-9 else np.array([0.0, 0.0, 1.0])
            offset = r_needed + float(normal @ pred.centers[k])
            planes.append((k, normal, offset))
    return planes


def _nonlinear_violation(states: np.ndarray, controls: np.ndarray,
                         grid, esdf, predictions, cfg: MpcConfig,
                         subsamples: int = 10) -> float:
    """Total true constraint violation along the densified trajectory."""
    total = 0.0
    r_static = cfg.robot_radius + cfg.static_margin
    taus = np.linspace(0.0, 1.0, subsamples + 1)[1:]
    for k in range(len(controls)):
        p0, v0 = states[k, :3], states[k, 3:]
        u = controls[k]
        pts = (p0[None, :] + np.outer(taus * cfg.dt, v0)
               + 0.5 * np.outer((taus * cfg.dt) ** 2, np.ones(3)) * u[None, :])
        if grid is not None and esdf is not None:
            vals = sample_field(esdf, grid, pts)
            total += float(np.maximum(0.0, r_static - vals).sum())
        for pred in predictions:
            centers = (pred.centers[k][None, :]
                       + taus[:, None] * (pred.centers[k + 1] - pred.centers[k]))
            radii = pred.radii[k] + taus * (pred.radii[k + 1] - pred.radii[k])
            dist = np.linalg.norm(pts - centers, axis=1)
            total += float(np.maximum(0.0, radii - dist).sum())
    return total


def solve_mpc(state: RobotState, reference: np.ndarray, grid: VoxelGrid | None,
              esdf: np.ndarray | None, predictions: list[ObstaclePrediction],
              cfg: MpcConfig, warm_start: np.ndarray | None = None) -> MpcSolution:
    """Track a reference window subject to control bounds and obstacles.

    Outer iterations relinearize collision constraints around the current
    rollout and double the penalty weight; they stop once the iterate moves
    less than step_tol.  The feasible flag reflects a dense nonlinear
    collision re-check of the final trajectory, not the penalty value.
    Falls back to a braking profile when the solve leaves violations behind.
    """
    n = cfg.horizon
    reference = np.asarray(reference, dtype=float).reshape(n + 1, 6)
    controls = (np.zeros((n, 3)) if warm_start is None
                else np.asarray(warm_start, dtype=float).reshape(n, 3).copy())
    controls = np.clip(controls, -cfg.accel_limit, cfg.accel_limit)

    penalty = cfg.penalty_init
    states = rollout(state, controls, cfg.dt)
    violations = [_nonlinear_violation(states, controls, grid, esdf,
                                       predictions, cfg)]
    best_states, best_controls = states, controls

    for outer in range(cfg.max_outer_iters):
        planes_static = _linearize_static(states, grid, esdf, cfg)
        planes_dynamic = _linearize_dynamic(states, predictions, cfg)

        def objective(ctrl):
            st = rollout(state, ctrl, cfg.dt)
            c_track, dstate, dcontrol = _tracking_cost_grad(st, ctrl, reference, cfg)
            c_pen, dstate_pen = _penalty_cost_grad(st, planes_static,
                                                   planes_dynamic, penalty)
            return c_track + c_pen, st, dstate + dstate_pen, dcontrol

        cost, states_new, dstate, dcontrol = objective(controls)
        step = 1.0
        for _ in range(cfg.max_inner_iters):
            grad = _controls_gradient(dstate, dcontrol, cfg)
            candidate = np.clip(controls - step * grad,
                                -cfg.accel_limit, cfg.accel_limit)
            move = float(np.abs(candidate - controls).max())
            if move < 1e-9:
                break
            new_cost, new_states, new_dstate, new_dcontrol = objective(candidate)
            if new_cost < cost - 1e-12:
                controls, cost = candidate, new_cost
                states_new, dstate, dcontrol = new_states, new_dstate, new_dcontrol
                step = min(step * 2.0, 1.0)
            else:
                step *= 0.5
                if step < 1e-10:
                    break

        displacement = float(np.abs(states_new[:, :3] - states[:, :3]).max())
        states = states_new
        viol = _nonlinear_violation(states, controls, grid, esdf,
                                    predictions, cfg)
        if viol <= violations[-1] + 1e-12:
            violations.append(viol)
            best_states, best_controls = states, controls
        else:
            # keep the best iterate so the violation trend stays monotone
            states, controls = best_states, best_controls
            break
        penalty *= 2.0
        if displacement < cfg.step_tol:
            break

    final_viol = _nonlinear_violation(best_states, best_controls, grid, esdf,
                                      predictions, cfg)
    feasible = final_viol <= 1e-9

    if not feasible:
        brake_controls = _braking_profile(state, cfg)
        brake_states = rollout(state, brake_controls, cfg.dt)
        brake_viol = _nonlinear_violation(brake_states, brake_controls, grid,
                                          esdf, predictions, cfg)
        if brake_viol < final_viol - 1e-12:
            best_states, best_controls = brake_states, brake_controls
            violations.append(brake_viol)

    track_cost, _, _ = _tracking_cost_grad(best_states, best_controls,
                                           reference, cfg)
    return MpcSolution(best_states, best_controls, feasible, track_cost,
                       violations)


def _braking_profile(state: RobotState, cfg: MpcConfig) -> np.ndarray:
    """Maximum deceleration along the current velocity until rest."""
    controls = np.zeros((cfg.horizon, 3))
    vel = state.velocity.copy()
    for k in range(cfg.horizon):
        speed = float(np.linalg.norm(vel))
        if speed < 1e-9:
            break
        direction = vel / speed
        scale = float(np.abs(direction).max())
        mag = min(cfg.accel_limit / max(scale, 1e-9), speed / cfg.dt)
        controls[k] = -mag * direction
        vel = vel + controls[k] * cfg.dt
    return np.clip(controls, -cfg.accel_limit, cfg.accel_limit)


class TrackingController:
    """Stateful wrapper that tracks a spline with warm-started MPC."""

    def __init__(self, cfg: MpcConfig):
        self.cfg = cfg
        self.warm: np.ndarray | None = None

    def reset(self):
        self.warm = None

    def reference_window(self, trajectory, elapsed: float) -> np.ndarray:
        cfg = self.cfg
        times = elapsed + np.arange(cfg.horizon + 1) * cfg.dt
        pos, vel, _ = trajectory.sample(times)
        over = times > trajectory.duration
        if np.any(over):
            vel = vel.copy()
            vel[over] = 0.0
        return np.hstack([pos, vel])

    @staticmethod
    def hold_reference(position, horizon: int) -> np.ndarray:
        ref = np.zeros((horizon + 1, 6))
        ref[:, :3] = np.asarray(position, dtype=float)[None, :]
        return ref

    def step(self, state: RobotState, reference: np.ndarray,
             grid: VoxelGrid | None, esdf: np.ndarray | None,
             predictions: list[ObstaclePrediction]) -> MpcSolution:
        solution = solve_mpc(state, reference, grid, esdf, predictions,
                             self.cfg, warm_start=self.warm)
        # shift one step for the next call, repeating the final control
        self.warm = np.vstack([solution.controls[1:], solution.controls[-1:]])
        return solution
