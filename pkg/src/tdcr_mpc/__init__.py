"""Collision-constrained MPC and supporting tools for a tendon-driven continuum robot."""

from .dls import DlsParams, collision_cost, dls_step
from .geometry import RobotGeometry
from .harness import benchmark_solver, run_comparison, run_scenario
from .kinematics import (
    ArcParameters,
    actuators_to_arcs,
    arcs_to_shape,
    arcs_to_tendons,
    disk_jacobian,
    forward_kinematics,
    segment_curvature,
)
from .local_control import LocalGains, body_error, damped_pseudoinverse, local_control
from .mesh_sdf import SafeZone, load_mesh, sdf_gradient, signed_distance
from .mpc import MpcParams, MpcSolution, evaluate_constraints, initialize, solve, stage_cost
from .plant import DisturbanceSpec, Plant
from .scenario import ScenarioConfig, WaypointSpec, load_config

__all__ = [
    "ArcParameters",
    "DisturbanceSpec",
    "DlsParams",
    "LocalGains",
    "MpcParams",
    "MpcSolution",
    "Plant",
    "RobotGeometry",
    "SafeZone",
    "ScenarioConfig",
    "WaypointSpec",
    "actuators_to_arcs",
    "arcs_to_shape",
    "arcs_to_tendons",
    "benchmark_solver",
    "body_error",
    "collision_cost",
    "damped_pseudoinverse",
    "disk_jacobian",
    "dls_step",
    "evaluate_constraints",
    "forward_kinematics",
    "initialize",
    "load_config",
    "load_mesh",
    "local_control",
    "run_comparison",
    "run_scenario",
    "sdf_gradient",
    "segment_curvature",
    "signed_distance",
    "solve",
    "stage_cost",
]
