"""Collision-avoidance trajectory optimization for padded-polygon robots
among point-cloud obstacles.

The upper-level OCP treats every (shape point, obstacle point) pair as one
semi-infinite constraint; local reduction plus an external active set keep
the subproblems small.  A zero-order robust mode propagates ellipsoidal
state uncertainty and tightens the constraints by frozen backoffs.
"""

from .constraints import (LinearizedConstraint, eval_nominal, eval_penetration,
                          eval_robust, jacobians_2d, rotational_backoff,
                          affine_backoff)
from .distance_field import (ObstacleField, SubsetParams, build_field,
                             build_field_from_occupancy, closest_obstacle,
                             load_occupancy_pgm, load_pointcloud_csv,
                             save_pointcloud_csv, save_sd_pgm,
                             signed_distance, update_obs_subset)
from .dynamics import DiffDriveModel, DiscreteStep, integrate, rollout
from .errors import (SipColavError, NonConvexPolygon, DegeneratePolygon,
                     EmptyObstacleSet, OutOfBounds, PenetrationCase,
                     NoConvergence, DimensionMismatch, NotSymmetric,
                     IndefiniteBeyondTolerance, QpFailure, MapExit,
                     DegeneratePath, SchemaError)
from .geometry import (PaddedPolygon, Pose2, boundary_grid,
                       halfplanes_from_vertices, min_signed_distance,
                       project_point_onto_boundary, project_point_onto_polygon,
                       project_points_onto_polygon, rot2)
from .lower_level import (NominalMaximizer, RobustMaximizer, solve_nominal,
                          solve_robust)
from .ocp import OcpProblem, SubproblemResult, Trajectory, solve_subproblem
from .qp import QpRow, QpSolution, StructuredQp
from .solver import (ObstacleSubset, SolveConfig, SolverReport,
                     shift_warm_start, solve_nominal_ocp, solve_robust_ocp)
from .uncertainty import UncertaintyTube, propagate, psd_sqrt
from .maps import MapSpec, get_map, sample_outline
from .scenario_io import Scenario2D, load_map, load_scenario
from .simulator import (LIMIT_PROFILES, LimitProfile, RunLog, Scenario,
                        TickRecord, evaluate_min_distance,
                        generate_reference, run_mpc, sample_disturbance)

__version__ = "0.1.0"

__all__ = [
    "LinearizedConstraint", "eval_nominal", "eval_penetration", "eval_robust",
    "jacobians_2d", "rotational_backoff", "affine_backoff",
    "ObstacleField", "SubsetParams", "build_field",
    "build_field_from_occupancy", "closest_obstacle", "load_occupancy_pgm",
    "load_pointcloud_csv", "save_pointcloud_csv", "save_sd_pgm",
    "signed_distance", "update_obs_subset",
    "DiffDriveModel", "DiscreteStep", "integrate", "rollout",
    "SipColavError", "NonConvexPolygon", "DegeneratePolygon",
    "EmptyObstacleSet", "OutOfBounds", "PenetrationCase", "NoConvergence",
    "DimensionMismatch", "NotSymmetric", "IndefiniteBeyondTolerance",
    "QpFailure", "MapExit", "DegeneratePath", "SchemaError",
    "PaddedPolygon", "Pose2", "boundary_grid", "halfplanes_from_vertices",
    "min_signed_distance", "project_point_onto_boundary",
    "project_point_onto_polygon", "project_points_onto_polygon", "rot2",
    "NominalMaximizer", "RobustMaximizer", "solve_nominal", "solve_robust",
    "OcpProblem", "SubproblemResult", "Trajectory", "solve_subproblem",
    "QpRow", "QpSolution", "StructuredQp",
    "ObstacleSubset", "SolveConfig", "SolverReport", "shift_warm_start",
    "solve_nominal_ocp", "solve_robust_ocp",
    "UncertaintyTube", "propagate", "psd_sqrt",
    "MapSpec", "get_map", "sample_outline",
    "Scenario2D", "load_map", "load_scenario",
    "LIMIT_PROFILES", "LimitProfile", "RunLog", "Scenario", "TickRecord",
    "evaluate_min_distance", "generate_reference", "run_mpc",
    "sample_disturbance",
]
