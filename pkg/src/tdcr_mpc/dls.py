"""Damped-least-squares reference controller with an additive collision cost.

The collision term is a squared hinge on the margin violation of every body
disk (tip excluded); it is identically zero while the body stays at least c_d
inside the safe zone, so it only shapes the motion once a disk gets close to
the boundary. Used head-to-head against the MPC.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import STATE_DIM, RobotGeometry, coupling_projector
from .kinematics import shape_jacobian
from .mesh_sdf import SafeZone, signed_distance_batch


@dataclass(frozen=True)
class DlsParams:
    c_w: float = 1.0          # W = c_w * I
    k_j: float = 0.05         # per-tick fractional step of the law
    c_d: float = 5.5          # safe margin shared with the MPC (mm)
    control_dt: float = 1.0 / 30.0
    u_min: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, -10.0))
    u_max: np.ndarray = field(default_factory=lambda: np.full(STATE_DIM, 10.0))

    def __post_init__(self):
        if self.c_w <= 0 or self.k_j <= 0:
            raise ValueError("c_w and k_j must be positive")


@dataclass
class DlsResult:
    u: np.ndarray             # applied input (mm/s), coupling-consistent, clamped
    u_raw: np.ndarray         # law output before projection and clamping
    clamped: bool
    projection_delta: float   # norm removed by the coupling projection


def collision_cost(shape: np.ndarray, zone: SafeZone | None, c_d: float) -> float:
    """h = sum over body disks of ReLU(c_d - d(p_i))^2; zero deep inside."""
    if zone is None:
        return 0.0
    body = np.asarray(shape, dtype=float)[:-1]
    d, _, _ = signed_distance_batch(zone, body)
    viol = np.maximum(c_d - d, 0.0)
    return float(np.sum(viol * viol))


def collision_cost_gradient(
    state: np.ndarray,
    geom: RobotGeometry,
    zone: SafeZone | None,
    c_d: float,
    shape: np.ndarray | None = None,
    jacobians: np.ndarray | None = None,
) -> np.ndarray:
    """d h / d state via the chain rule through the disk positions."""
    if zone is None:
        return np.zeros(STATE_DIM)
    if jacobians is None:
        jacobians = shape_jacobian(state, geom)
    if shape is None:
        from .kinematics import forward_kinematics

        shape = forward_kinematics(state, geom)
    body = shape[:-1]
    d, _, grad_d = signed_distance_batch(zone, body)
    viol = np.maximum(c_d - d, 0.0)
    # hinge is C1: gradient vanishes at d = c_d
    return -2.0 * np.einsum("i,ijk,ij->k", viol, jacobians[:-1], grad_d)


def dls_step(
    measured: np.ndarray,
    state: np.ndarray,
    p_d: np.ndarray,
    zone: SafeZone | None,
    params: DlsParams,
    geom: RobotGeometry,
) -> DlsResult:
    """One damped-least-squares step toward p_d with collision-cost descent.

    The law computes a per-tick state increment; the returned input is the
    increment divided by the control period, projected onto the
    coupling-consistent subspace and clamped to the actuator speed box.
    """
    measured = np.asarray(measured, dtype=float)
    jacobians = shape_jacobian(state, geom)
    J = jacobians[-1]
    ee_err = np.asarray(p_d, dtype=float) - measured[-1]
    grad_h = collision_cost_gradient(
        state, geom, zone, params.c_d, shape=measured, jacobians=jacobians
    )
    W = params.c_w * np.eye(STATE_DIM)
    rhs = J.T @ ee_err + W @ (-grad_h)
    increment = params.k_j * np.linalg.solve(J.T @ J + W, rhs)
    u_raw = increment / params.control_dt

    u_proj = coupling_projector() @ u_raw
    u = np.clip(u_proj, params.u_min, params.u_max)
    return DlsResult(
        u=u,
        u_raw=u_raw,
        clamped=bool(np.any(u != u_proj)),
        projection_delta=float(np.linalg.norm(u_proj - u_raw)),
    )
