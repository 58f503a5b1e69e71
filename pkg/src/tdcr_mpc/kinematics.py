"""Piecewise-constant-curvature kinematics of the three-segment robot.

Each segment bends as a circular arc described by curvature kappa (1/mm),
bending-plane angle phi (rad) and arc length gamma (mm). Tendon lengths relate
to the arc through q_jm = gamma_j * (1 - r_t * kappa_j * cos(beta_m - phi_j)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidState, KinematicLimit
from .geometry import GAMMA_IDX, SEGMENTS, STATE_DIM, TENDON_IDX, RobotGeometry

# below this curvature the (1 - cos)/kappa terms switch to a series expansion
STRAIGHT_EPS = 1e-8

# central finite-difference step for Jacobians (mm)
FD_STEP = 1e-4


@dataclass(frozen=True)
class ArcParameters:
    """Per-segment arc parameters; arrays of shape (3,)."""

    kappa: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray


def actuators_to_arcs(state: np.ndarray, geom: RobotGeometry) -> ArcParameters:
    """Invert the tendon relation to arc parameters.

    For the symmetric three-tendon arrangement the closed form below is exact
    and maps any state to the arcs of its tendon-consistent projection. A
    straight segment reports phi = 0.
    """
    x = np.asarray(state, dtype=float)
    gamma = x[GAMMA_IDX]
    if np.any(~np.isfinite(x)):
        raise InvalidState("actuator state contains non-finite entries")
    if np.any(gamma <= 0):
        raise InvalidState(f"non-positive segment length: {gamma}")

    beta = np.asarray(geom.tendon_angles)
    deltas = x[TENDON_IDX] - gamma[:, None]          # (3 segments, 3 tendons)
    a = (deltas * np.cos(beta)[None, :]).sum(axis=1)
    b = (deltas * np.sin(beta)[None, :]).sum(axis=1)
    r = np.hypot(a, b)
    kappa = 2.0 * r / (3.0 * gamma * geom.tendon_pitch_radius)
    phi = np.where(kappa > 0, np.arctan2(-b, -a), 0.0)
    # canonical range [-pi, pi)
    phi = np.where(phi >= np.pi, phi - 2.0 * np.pi, phi)

    if np.any(kappa * geom.tendon_pitch_radius > 1.0):
        raise KinematicLimit(
            f"curvature {kappa} exceeds 1/r_t; a tendon length would be non-positive"
        )
    return ArcParameters(kappa=kappa, phi=phi, gamma=gamma.copy())


def arcs_to_tendons(arcs: ArcParameters, geom: RobotGeometry) -> np.ndarray:
    """Tendon-consistent state realizing the given arcs."""
    beta = np.asarray(geom.tendon_angles)
    x = np.empty(STATE_DIM)
    q = arcs.gamma[:, None] * (
        1.0
        - geom.tendon_pitch_radius
        * arcs.kappa[:, None]
        * np.cos(beta[None, :] - arcs.phi[:, None])
    )
    x[TENDON_IDX] = q
    x[GAMMA_IDX] = arcs.gamma
    return x


def _arc_offsets(kappa, s):
    """In-plane arc coordinates ((1-cos(k s))/k, sin(k s)/k), series below STRAIGHT_EPS.

    kappa and s broadcast together; safe at kappa = 0.
    """
    kappa = np.asarray(kappa, dtype=float)
    s = np.asarray(s, dtype=float)
    small = np.abs(kappa) < STRAIGHT_EPS
    k_safe = np.where(small, 1.0, kappa)
    theta = kappa * s
    x_exact = (1.0 - np.cos(theta)) / k_safe
    z_exact = np.sin(theta) / k_safe
    # 2nd-order series in (kappa*s), exact to O((k s)^4) relative
    x_series = kappa * s * s * 0.5 * (1.0 - theta * theta / 12.0)
    z_series = s * (1.0 - theta * theta / 6.0)
    return np.where(small, x_series, x_exact), np.where(small, z_series, z_exact)


def _rot_z(phi):
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    R = np.zeros(phi.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 1] = -s
    R[..., 1, 0] = s
    R[..., 1, 1] = c
    R[..., 2, 2] = 1.0
    return R


def _rot_y(theta):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    R = np.zeros(theta.shape + (3, 3))
    R[..., 0, 0] = c
    R[..., 0, 2] = s
    R[..., 1, 1] = 1.0
    R[..., 2, 0] = -s
    R[..., 2, 2] = c
    return R


def arcs_to_shape(arcs: ArcParameters, geom: RobotGeometry) -> np.ndarray:
    """Disk positions (3n, 3) for one set of arc parameters."""
    return _arcs_to_shape_batch(
        arcs.kappa[None, :], arcs.phi[None, :], arcs.gamma[None, :], geom
    )[0]


def _arcs_to_shape_batch(kappa, phi, gamma, geom: RobotGeometry) -> np.ndarray:
    """Batched disk positions. kappa/phi/gamma: (B, 3) -> (B, 3n, 3)."""
    B = kappa.shape[0]
    n = geom.disks_per_segment
    frac = np.arange(1, n + 1) / n                   # disk stations along a segment

    R_base = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    t_base = np.zeros((B, 3))
    out = np.empty((B, SEGMENTS * n, 3))

    for j in range(SEGMENTS):
        k = kappa[:, j][:, None]                      # (B,1)
        s = gamma[:, j][:, None] * frac[None, :]     # (B,n)
        x_l, z_l = _arc_offsets(k, s)                # (B,n)
        cph = np.cos(phi[:, j])[:, None]
        sph = np.sin(phi[:, j])[:, None]
        p_local = np.stack([cph * x_l, sph * x_l, z_l], axis=-1)   # (B,n,3)

        p_world = np.einsum("bij,bnj->bni", R_base, p_local) + t_base[:, None, :]
        out[:, j * n : (j + 1) * n] = p_world

        # advance the base frame to the segment tip
        theta_end = kappa[:, j] * gamma[:, j]
        Rz = _rot_z(phi[:, j])
        R_seg = Rz @ _rot_y(theta_end) @ _rot_z(-phi[:, j])
        t_base = p_world[:, -1]
        R_base = R_base @ R_seg
    return out


def forward_kinematics(state: np.ndarray, geom: RobotGeometry) -> np.ndarray:
    """Map an actuator state to its 3n disk positions (mm, base frame)."""
    return arcs_to_shape(actuators_to_arcs(state, geom), geom)


def forward_kinematics_batch(states: np.ndarray, geom: RobotGeometry) -> np.ndarray:
    """Vectorized forward kinematics for a batch of states (B, 12) -> (B, 3n, 3)."""
    x = np.asarray(states, dtype=float)
    if x.ndim != 2 or x.shape[1] != STATE_DIM:
        raise InvalidState(f"expected (B, {STATE_DIM}) state batch, got {x.shape}")
    gamma = x[:, GAMMA_IDX]
    if np.any(gamma <= 0):
        raise InvalidState("non-positive segment length in batch")
    beta = np.asarray(geom.tendon_angles)
    deltas = x[:, TENDON_IDX] - gamma[:, :, None]
    a = (deltas * np.cos(beta)[None, None, :]).sum(axis=2)
    b = (deltas * np.sin(beta)[None, None, :]).sum(axis=2)
    r = np.hypot(a, b)
    kappa = 2.0 * r / (3.0 * gamma * geom.tendon_pitch_radius)
    if np.any(kappa * geom.tendon_pitch_radius > 1.0):
        raise KinematicLimit("curvature exceeds 1/r_t in batch")
    phi = np.where(kappa > 0, np.arctan2(-b, -a), 0.0)
    return _arcs_to_shape_batch(kappa, phi, gamma, geom)


def segment_curvature(state: np.ndarray, geom: RobotGeometry, j: int) -> float:
    """Curvature of segment j (0-based), consistent with actuators_to_arcs."""
    return float(actuators_to_arcs(state, geom).kappa[j])


def curvature_gradient(state: np.ndarray, geom: RobotGeometry, j: int) -> np.ndarray:
    """d kappa_j / d state, analytic; zero vector at the straight configuration.

    kappa is non-smooth at zero curvature; the constraint it feeds is inactive
    there, so the zero subgradient is safe.
    """
    x = np.asarray(state, dtype=float)
    beta = np.asarray(geom.tendon_angles)
    gamma = x[GAMMA_IDX[j]]
    deltas = x[TENDON_IDX[j]] - gamma
    cb, sb = np.cos(beta), np.sin(beta)
    a = float(deltas @ cb)
    b = float(deltas @ sb)
    r = np.hypot(a, b)
    grad = np.zeros(STATE_DIM)
    if r < 1e-12:
        return grad
    scale = 2.0 / (3.0 * gamma * geom.tendon_pitch_radius)
    kappa = scale * r
    grad[TENDON_IDX[j]] = scale * (a * cb + b * sb) / r
    grad[GAMMA_IDX[j]] = scale * (a * (-cb.sum()) + b * (-sb.sum())) / r - kappa / gamma
    return grad


def _fd_points(state: np.ndarray, geom: RobotGeometry, step: float):
    """Perturbed states and divisors for boundary-aware central differences."""
    x = np.asarray(state, dtype=float)
    lo, hi = geom.state_lower, geom.state_upper
    plus = np.repeat(x[None, :], STATE_DIM, axis=0)
    minus = plus.copy()
    for k in range(STATE_DIM):
        plus[k, k] = min(x[k] + step, hi[k]) if x[k] <= hi[k] else x[k] + step
        minus[k, k] = max(x[k] - step, lo[k]) if x[k] >= lo[k] else x[k] - step
    denom = plus[np.arange(STATE_DIM), np.arange(STATE_DIM)] - minus[
        np.arange(STATE_DIM), np.arange(STATE_DIM)
    ]
    return plus, minus, denom


def shape_jacobian(state: np.ndarray, geom: RobotGeometry, step: float = FD_STEP) -> np.ndarray:
    """Finite-difference Jacobians of all disk positions, shape (3n, 3, 12).

    Central differences with step h; falls back to one-sided at a box
    boundary so perturbed states stay inside the limits.
    """
    plus, minus, denom = _fd_points(state, geom, step)
    shapes = forward_kinematics_batch(np.vstack([plus, minus]), geom)
    diff = shapes[:STATE_DIM] - shapes[STATE_DIM:]          # (12, 3n, 3)
    return np.transpose(diff / denom[:, None, None], (1, 2, 0))


def shape_jacobian_many(states: np.ndarray, geom: RobotGeometry, step: float = FD_STEP) -> np.ndarray:
    """Jacobians for several states in one kinematics batch, (B, 3n, 3, 12)."""
    states = np.asarray(states, dtype=float)
    B = states.shape[0]
    plus_all, minus_all, denom_all = [], [], []
    for b in range(B):
        plus, minus, denom = _fd_points(states[b], geom, step)
        plus_all.append(plus)
        minus_all.append(minus)
        denom_all.append(denom)
    shapes = forward_kinematics_batch(np.vstack(plus_all + minus_all), geom)
    n_pts = geom.total_disks
    out = np.empty((B, n_pts, 3, STATE_DIM))
    half = B * STATE_DIM
    for b in range(B):
        sl_p = shapes[b * STATE_DIM : (b + 1) * STATE_DIM]
        sl_m = shapes[half + b * STATE_DIM : half + (b + 1) * STATE_DIM]
        diff = sl_p - sl_m
        out[b] = np.transpose(diff / denom_all[b][:, None, None], (1, 2, 0))
    return out


def disk_jacobian(state: np.ndarray, geom: RobotGeometry, i: int, step: float = FD_STEP) -> np.ndarray:
    """3x12 Jacobian of disk i (1-based; i = 3n is the end-effector)."""
    if not (1 <= i <= geom.total_disks):
        raise InvalidState(f"disk index {i} outside 1..{geom.total_disks}")
    return shape_jacobian(state, geom, step)[i - 1]


def ee_jacobian(state: np.ndarray, geom: RobotGeometry, step: float = FD_STEP) -> np.ndarray:
    """3x12 Jacobian of the end-effector position."""
    return shape_jacobian(state, geom, step)[-1]
