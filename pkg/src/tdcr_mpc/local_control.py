"""Analytic local feedback law driving the measured shape toward the nominal one.

The end-effector term acts through a damped pseudo-inverse of the EE Jacobian;
the body term descends the mean squared disk deviation inside the EE null
space, so it shapes the body without disturbing the tip correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .geometry import STATE_DIM, RobotGeometry
from .kinematics import shape_jacobian


@dataclass(frozen=True)
class LocalGains:
    k_ee: float = 2.0
    k_body: float = 0.5
    damping: float = 1e-2

    def __post_init__(self):
        if self.k_ee < 0 or self.k_body < 0:
            raise ValueError("gains must be non-negative")
        if self.damping <= 0:
            raise ValueError("damping must be positive")


def damped_pseudoinverse(J: np.ndarray, damping: float) -> np.ndarray:
    """J+ = (J^T J + damping*I)^-1 J^T; well conditioned for damping > 0."""
    J = np.asarray(J, dtype=float)
    n = J.shape[1]
    return np.linalg.solve(J.T @ J + damping * np.eye(n), J.T)


def body_error(nominal: np.ndarray, measured: np.ndarray) -> float:
    """Mean squared disk deviation over all disks except the tip."""
    nominal = np.asarray(nominal, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if nominal.shape != measured.shape:
        raise InvalidInput(f"shape mismatch: {nominal.shape} vs {measured.shape}")
    diff = nominal[:-1] - measured[:-1]
    return float(np.sum(diff * diff) / len(diff))


def body_error_gradient(
    nominal: np.ndarray, measured: np.ndarray, jacobians: np.ndarray
) -> np.ndarray:
    """Gradient of body_error w.r.t. the nominal state, given disk Jacobians (3n,3,12)."""
    diff = nominal[:-1] - measured[:-1]                     # (3n-1, 3)
    return 2.0 / len(diff) * np.einsum("ijk,ij->k", jacobians[:-1], diff)


def local_control(
    nominal: np.ndarray,
    measured: np.ndarray,
    state: np.ndarray,
    gains: LocalGains,
    geom: RobotGeometry,
    jacobians: np.ndarray | None = None,
) -> np.ndarray:
    """Feedback input k_ee*J+*(p_hat - p) plus null-space body shaping.

    `measured` is either the full disk list (3n, 3) or, in EE-only feedback
    mode, just the tip position; the body term is dropped in that case.
    Jacobians are evaluated at `state` (the last commanded nominal state)
    unless precomputed ones are passed in.
    """
    nominal = np.asarray(nominal, dtype=float)
    measured = np.asarray(measured, dtype=float)
    n_disks = geom.total_disks
    if nominal.shape != (n_disks, 3):
        raise InvalidInput(f"nominal shape must be ({n_disks}, 3)")

    ee_only = measured.shape in ((3,), (1, 3))
    if ee_only:
        measured_tip = measured.reshape(3)
    elif measured.shape == (n_disks, 3):
        measured_tip = measured[-1]
    else:
        raise InvalidInput(f"measured shape {measured.shape} does not match {n_disks} disks")

    if jacobians is None:
        jacobians = shape_jacobian(state, geom)
    J = jacobians[-1]
    J_pinv = damped_pseudoinverse(J, gains.damping)

    delta_ee = nominal[-1] - measured_tip
    u = gains.k_ee * (J_pinv @ delta_ee)

    if not ee_only and gains.k_body > 0:
        grad = body_error_gradient(nominal, measured, jacobians)
        null_proj = np.eye(STATE_DIM) - J_pinv @ J
        u = u + gains.k_body * (null_proj @ grad)
    return u
