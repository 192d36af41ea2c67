"""Coverage inspection planning with a deterministic mission simulator."""

from .world import (FREE, OCCUPIED, UNKNOWN, Box, CameraModel, Cylinder,
                    MissionError, Obstacle, RaycastHit, ScenarioError,
                    SurfaceSet, UnreachableError, VoxelGrid, distance_field,
                    raycast, sample_field, sample_field_gradient)
from .scenario import (PlannerParams, RobotStart, Scenario, load_scenario,
                       save_scenario)
from .segmentation import (OrientedBox, Segment, estimate_normals, fit_bbox,
                           region_grow, segment_surface)
from .viewpoints import (Viewpoint, ViewpointStatus, coverage_closure_check,
                         generate_viewpoints, nominal_coverage, plan_viewpoints)
from .route import (Cluster, Tour, local_reorder, merge_outliers, plan_route,
                    remap_clusters, solve_tsp)
from .spline import (BSplineTrajectory, CostWeights, fit_initial_controls,
                     init_guide_path, optimize, plan_static_trajectory)
from .mpc import (MpcConfig, MpcSolution, ObstaclePrediction, RobotState,
                  TrackingController, predict_dynamics, predict_obstacles,
                  solve_mpc)
from .view_adapt import (WeightClass, WeightGrid, best_view_angle,
                         build_weights, identify_blocked, make_candidate_angles,
                         occluded_regions, raycast_score)

__version__ = "0.1.0"
