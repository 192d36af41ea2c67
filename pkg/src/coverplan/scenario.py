"""Scenario definition and JSON serialization.

A scenario bundles the reference map the planner works from, the true world
the simulator flies in (reference plus unforeseen extras), dynamic
obstacles, the robot start pose, the camera model, tunable parameters and
a seed.  Field names in the file format carry explicit units (_m, _rad,
_mps) and unknown keys are rejected with a message naming their location.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .world import (FREE, OCCUPIED, UNKNOWN, Box, CameraModel, Cylinder,
                    Obstacle, ScenarioError, SurfaceSet, VoxelGrid,
                    stamp_obstacles)


@dataclass
class PlannerParams:
    """All mission tunables in one flat, serializable bag."""

    # surface analysis
    normal_radius_m: float = 0.5
    segment_angle_thresh_rad: float = math.radians(20.0)
    segment_curvature_thresh: float = 0.05
    segment_min_cells: int = 8
    # viewpoint generation
    standoff_m: float = 1.5
    overlap: float = 0.2
    # route construction
    cluster_tau_max: int = 3
    merge_requires_adjacency: bool = False
    # static trajectory
    spline_degree: int = 3
    spline_dt_s: float = 0.5
    cruise_speed_mps: float = 1.0
    safe_distance_m: float = 0.5
    weight_control: float = 1.0
    weight_smooth: float = 1.0
    weight_static: float = 10.0
    spline_max_iters: int = 200
    # tracking controller
    mpc_horizon: int = 20
    mpc_dt_s: float = 0.1
    mpc_control_weight: float = 0.1
    mpc_pos_weight: float = 1.0
    mpc_vel_weight: float = 1.0
    accel_limit_mps2: float = 2.0
    robot_radius_m: float = 0.3
    static_margin_m: float = 0.2
    dynamic_margin_m: float = 0.1
    obstacle_growth_m: float = 0.05
    # view-angle adaptation
    weight_base: float = 1.0
    weight_occluded: float = 3.0
    weight_scanned: float = 0.1
    angle_spacing_rad: float = math.radians(10.0)
    # simulator
    sim_dt_s: float = 0.1
    sensor_range_m: float = 5.0
    sensor_rays_azimuth: int = 32
    sensor_rays_elevation: int = 16
    yaw_rate_rad_s: float = math.radians(90.0)
    dwell_timeout_s: float = 3.0
    arrival_tolerance_m: float = 0.2
    replan_attempts: int = 2
    esdf_truncation_m: float = 2.0
    max_mission_time_s: float = 900.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict, context: str = "params") -> "PlannerParams":
        valid = {f.name: f.type for f in dataclasses.fields(cls)}
        out = cls()
        for key, value in data.items():
            if key not in valid:
                raise ScenarioError(f"{context}: unknown key '{key}'")
            current = getattr(out, key)
            if isinstance(current, bool):
                if not isinstance(value, bool):
                    raise ScenarioError(f"{context}.{key}: expected a boolean")
            elif isinstance(current, int) and not isinstance(value, bool):
                if not isinstance(value, (int, float)) or value != int(value):
                    raise ScenarioError(f"{context}.{key}: expected an integer")
                value = int(value)
            elif isinstance(current, float):
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ScenarioError(f"{context}.{key}: expected a number")
                value = float(value)
            setattr(out, key, value)
        return out


@dataclass
class RobotStart:
    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.position.shape != (3,):
            raise ScenarioError("robot_start position_m must be a 3-vector")
        self.yaw = float(self.yaw)


@dataclass
class Scenario:
    name: str
    grid: VoxelGrid
    surfaces: SurfaceSet
    true_world_extras: list[Obstacle] = field(default_factory=list)
    dynamic_obstacles: list[Obstacle] = field(default_factory=list)
    robot_start: RobotStart = field(default_factory=lambda: RobotStart(np.zeros(3)))
    camera: CameraModel = field(default_factory=CameraModel)
    params: PlannerParams = field(default_factory=PlannerParams)
    seed: int = 0

    def build_true_world(self) -> VoxelGrid:
        """Reference grid with the unforeseen static extras stamped in."""
        return stamp_obstacles(self.grid, self.true_world_extras)

    def validate(self):
        self.surfaces.validate(self.grid)
        true_world = self.build_true_world()
        if not true_world.in_bounds_point(self.robot_start.position):
            raise ScenarioError("robot_start: position_m outside grid bounds")
        if true_world.state_at(self.robot_start.position) != FREE:
            raise ScenarioError(
                "robot_start: position_m must lie in a free cell of the true world")
        for i, obs in enumerate(self.dynamic_obstacles):
            if not obs.dynamic:
                raise ScenarioError(
                    f"dynamic_obstacles[{i}]: missing motion definition")


# ---------- run-length encoding over flat cell indices ----------


def encode_rle(flat_indices: np.ndarray) -> list[int]:
    """Encode sorted unique flat indices as [start, length, ...] pairs."""
    flat = np.asarray(flat_indices, dtype=np.int64).ravel()
    if flat.size == 0:
        return []
    flat = np.unique(flat)
    breaks = np.nonzero(np.diff(flat) != 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    ends = np.concatenate([breaks, [len(flat) - 1]])
    out: list[int] = []
    for s, e in zip(starts, ends):
        out.extend((int(flat[s]), int(e - s + 1)))
    return out


def decode_rle(pairs, n_cells: int, context: str) -> np.ndarray:
    if not isinstance(pairs, list) or len(pairs) % 2 != 0:
        raise ScenarioError(f"{context}: expected a flat list of start,length pairs")
    chunks = []
    prev_end = -1
    for i in range(0, len(pairs), 2):
        start, length = pairs[i], pairs[i + 1]
        if not isinstance(start, int) or not isinstance(length, int) or length <= 0:
            raise ScenarioError(f"{context}: run {i // 2} must be integer start,length")
        if start <= prev_end:
            raise ScenarioError(f"{context}: runs must be sorted and disjoint")
        end = start + length - 1
        if start < 0 or end >= n_cells:
            raise ScenarioError(f"{context}: run {i // 2} outside grid cell range")
        chunks.append(np.arange(start, end + 1, dtype=np.int64))
        prev_end = end
    if not chunks:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(chunks)


# ---------- (de)serialization helpers ----------

_STATE_BY_NAME = {"unknown": UNKNOWN, "free": FREE, "occupied": OCCUPIED}


def _require(data: dict, key: str, context: str):
    if key not in data:
        raise ScenarioError(f"{context}: missing required key '{key}'")
    return data[key]


def _check_keys(data: dict, allowed: set[str], context: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{context}: expected an object")
    for key in data:
        if key not in allowed:
            raise ScenarioError(f"{context}: unknown key '{key}'")


def _vec3(value, context: str) -> np.ndarray:
    if (not isinstance(value, list) or len(value) != 3
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value)):
        raise ScenarioError(f"{context}: expected a list of 3 numbers")
    return np.asarray(value, dtype=float)


def _number(value, context: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(f"{context}: expected a number")
    return float(value)


def _grid_to_dict(grid: VoxelGrid) -> dict:
    flat_occ = grid.flat_indices(np.argwhere(grid.cells == OCCUPIED))
    flat_unk = grid.flat_indices(np.argwhere(grid.cells == UNKNOWN))
    out = {
        "origin_m": grid.origin.tolist(),
        "resolution_m": grid.resolution,
        "dims": list(grid.dims),
        "default_state": "free",
        "occupied_rle": encode_rle(flat_occ),
    }
    if flat_unk.size:
        out["unknown_rle"] = encode_rle(flat_unk)
    return out


def _grid_from_dict(data: dict, context: str = "grid") -> VoxelGrid:
    _check_keys(data, {"origin_m", "resolution_m", "dims", "default_state",
                       "occupied_rle", "unknown_rle"}, context)
    origin = _vec3(_require(data, "origin_m", context), f"{context}.origin_m")
    resolution = _number(_require(data, "resolution_m", context),
                         f"{context}.resolution_m")
    if resolution <= 0:
        raise ScenarioError(f"{context}.resolution_m: must be positive")
    dims = _require(data, "dims", context)
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and d >= 1 for d in dims)):
        raise ScenarioError(f"{context}.dims: expected 3 positive integers")
    default = data.get("default_state", "free")
    if default not in _STATE_BY_NAME:
        raise ScenarioError(f"{context}.default_state: unknown state '{default}'")
    n_cells = dims[0] * dims[1] * dims[2]
    cells = np.full(n_cells, _STATE_BY_NAME[default], dtype=np.uint8)
    if "unknown_rle" in data:
        cells[decode_rle(data["unknown_rle"], n_cells,
                         f"{context}.unknown_rle")] = UNKNOWN
    cells[decode_rle(data.get("occupied_rle", []), n_cells,
                     f"{context}.occupied_rle")] = OCCUPIED
    return VoxelGrid(origin, resolution, cells.reshape(dims))


def _surfaces_to_dict(surfaces: SurfaceSet, grid: VoxelGrid) -> dict:
    flats = grid.flat_indices(surfaces.cells)
    order = np.argsort(flats)
    out: dict = {"cells_rle": encode_rle(flats)}
    if surfaces.normals is not None:
        out["normals"] = surfaces.normals[order].tolist()
    if surfaces.curvatures is not None:
        out["curvatures"] = surfaces.curvatures[order].tolist()
    return out


def _surfaces_from_dict(data: dict, grid: VoxelGrid,
                        context: str = "surfaces") -> SurfaceSet:
    _check_keys(data, {"cells_rle", "normals", "curvatures"}, context)
    n_cells = int(np.prod(grid.dims))
    flats = decode_rle(_require(data, "cells_rle", context), n_cells,
                       f"{context}.cells_rle")
    cells = grid.unflatten(flats)
    normals = None
    if "normals" in data and data["normals"] is not None:
        normals = np.asarray(data["normals"], dtype=float)
        if normals.shape != (len(cells), 3):
            raise ScenarioError(f"{context}.normals: need one 3-vector per cell")
    curv = None
    if "curvatures" in data and data["curvatures"] is not None:
        curv = np.asarray(data["curvatures"], dtype=float)
        if curv.shape != (len(cells),):
            raise ScenarioError(f"{context}.curvatures: need one value per cell")
    return SurfaceSet(cells, normals, curv)


def _shape_to_dict(shape) -> dict:
    if isinstance(shape, Box):
        return {"type": "box", "min_m": shape.min_corner.tolist(),
                "max_m": shape.max_corner.tolist()}
    return {"type": "cylinder", "center_m": shape.center.tolist(),
            "radius_m": shape.radius, "height_m": shape.height}


def _shape_from_dict(data: dict, context: str):
    kind = _require(data, "type", context)
    if kind == "box":
        _check_keys(data, {"type", "min_m", "max_m"}, context)
        return Box(_vec3(_require(data, "min_m", context), f"{context}.min_m"),
                   _vec3(_require(data, "max_m", context), f"{context}.max_m"))
    if kind == "cylinder":
        _check_keys(data, {"type", "center_m", "radius_m", "height_m"}, context)
        return Cylinder(
            _vec3(_require(data, "center_m", context), f"{context}.center_m"),
            _number(_require(data, "radius_m", context), f"{context}.radius_m"),
            _number(_require(data, "height_m", context), f"{context}.height_m"))
    raise ScenarioError(f"{context}.type: unknown shape '{kind}'")


def _static_from_dict(data: dict, context: str) -> Obstacle:
    _check_keys(data, {"shape"}, context)
    return Obstacle(_shape_from_dict(_require(data, "shape", context),
                                     f"{context}.shape"))


def _dynamic_to_dict(obs: Obstacle) -> dict:
    return {
        "shape": _shape_to_dict(obs.shape),
        "motion": {
            "waypoints_m": obs.waypoints.tolist(),
            "speed_mps": obs.speed,
            "looping": obs.looping,
        },
    }


def _dynamic_from_dict(data: dict, context: str) -> Obstacle:
    _check_keys(data, {"shape", "motion"}, context)
    shape = _shape_from_dict(_require(data, "shape", context), f"{context}.shape")
    motion = _require(data, "motion", context)
    _check_keys(motion, {"waypoints_m", "speed_mps", "looping"}, f"{context}.motion")
    waypoints = _require(motion, "waypoints_m", f"{context}.motion")
    if not isinstance(waypoints, list) or len(waypoints) < 1:
        raise ScenarioError(f"{context}.motion.waypoints_m: need at least one point")
    wp = np.array([_vec3(w, f"{context}.motion.waypoints_m[{i}]")
                   for i, w in enumerate(waypoints)])
    speed = _number(_require(motion, "speed_mps", f"{context}.motion"),
                    f"{context}.motion.speed_mps")
    looping = motion.get("looping", True)
    if not isinstance(looping, bool):
        raise ScenarioError(f"{context}.motion.looping: expected a boolean")
    return Obstacle(shape, waypoints=wp, speed=speed, looping=looping)


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "name": scenario.name,
        "grid": _grid_to_dict(scenario.grid),
        "surfaces": _surfaces_to_dict(scenario.surfaces, scenario.grid),
        "true_world_extras": [
            {"shape": _shape_to_dict(o.shape)} for o in scenario.true_world_extras],
        "dynamic_obstacles": [
            _dynamic_to_dict(o) for o in scenario.dynamic_obstacles],
        "robot_start": {
            "position_m": scenario.robot_start.position.tolist(),
            "yaw_rad": scenario.robot_start.yaw,
        },
        "camera": {
            "fov_h_rad": scenario.camera.fov_h,
            "fov_v_rad": scenario.camera.fov_v,
            "range_m": scenario.camera.max_range,
            "max_incidence_rad": scenario.camera.max_incidence,
        },
        "params": scenario.params.to_dict(),
        "seed": scenario.seed,
    }


_TOP_KEYS = {"name", "grid", "surfaces", "true_world_extras", "dynamic_obstacles",
             "robot_start", "camera", "params", "seed"}


def scenario_from_dict(data: dict) -> Scenario:
    _check_keys(data, _TOP_KEYS, "scenario")
    name = data.get("name", "unnamed")
    if not isinstance(name, str):
        raise ScenarioError("scenario.name: expected a string")
    grid = _grid_from_dict(_require(data, "grid", "scenario"))
    surfaces = _surfaces_from_dict(_require(data, "surfaces", "scenario"), grid)

    extras = data.get("true_world_extras", [])
    if not isinstance(extras, list):
        raise ScenarioError("true_world_extras: expected a list")
    statics = [_static_from_dict(e, f"true_world_extras[{i}]")
               for i, e in enumerate(extras)]

    dyn = data.get("dynamic_obstacles", [])
    if not isinstance(dyn, list):
        raise ScenarioError("dynamic_obstacles: expected a list")
    dynamics = [_dynamic_from_dict(d, f"dynamic_obstacles[{i}]")
                for i, d in enumerate(dyn)]

    rs = _require(data, "robot_start", "scenario")
    _check_keys(rs, {"position_m", "yaw_rad"}, "robot_start")
    start = RobotStart(_vec3(_require(rs, "position_m", "robot_start"),
                             "robot_start.position_m"),
                       _number(rs.get("yaw_rad", 0.0), "robot_start.yaw_rad"))

    cam = _require(data, "camera", "scenario")
    _check_keys(cam, {"fov_h_rad", "fov_v_rad", "range_m", "max_incidence_rad"},
                "camera")
    camera = CameraModel(
        fov_h=_number(_require(cam, "fov_h_rad", "camera"), "camera.fov_h_rad"),
        fov_v=_number(_require(cam, "fov_v_rad", "camera"), "camera.fov_v_rad"),
        max_range=_number(_require(cam, "range_m", "camera"), "camera.range_m"),
        max_incidence=_number(_require(cam, "max_incidence_rad", "camera"),
                              "camera.max_incidence_rad"))

    params = PlannerParams.from_dict(data.get("params", {}), "params")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("scenario.seed: expected an integer")

    scenario = Scenario(name=name, grid=grid, surfaces=surfaces,
                        true_world_extras=statics, dynamic_obstacles=dynamics,
                        robot_start=start, camera=camera, params=params,
                        seed=seed)
    scenario.validate()
    return scenario


def save_scenario(scenario: Scenario, path: str):
    write_json_atomic(path, scenario_to_dict(scenario))


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})")
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    return scenario_from_dict(data)


def write_json_atomic(path: str, payload):
    """Serialize to a temp file in the target directory, then rename."""
    text = json.dumps(payload, indent=2, sort_keys=True)
    write_text_atomic(path, text + "\n")


def write_text_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
