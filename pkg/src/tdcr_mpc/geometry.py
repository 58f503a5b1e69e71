"""Robot geometry and the 12-dimensional actuator state layout.

The actuator state vector is ordered
    (q_11, q_12, q_13, gamma_1, q_21, q_22, q_23, gamma_2, q_31, q_32, q_33, gamma_3)
with tendon lengths q_jm and segment lengths gamma_j, all in millimetres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 12
SEGMENTS = 3
TENDONS_PER_SEGMENT = 3

# index layout of the state vector
TENDON_IDX = np.array([[0, 1, 2], [4, 5, 6], [8, 9, 10]])
GAMMA_IDX = np.array([3, 7, 11])


@dataclass(frozen=True)
class RobotGeometry:
    """Fixed geometric parameters of the three-segment robot.

    All lengths are in mm, angles in rad. Routing disks are equidistant along
    each segment and every segment carries the same number of disks.
    """

    disks_per_segment: int = 10
    tendon_pitch_radius: float = 8.0
    tendon_angles: tuple[float, float, float] = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
    tendon_min: float = 20.0
    tendon_max: float = 140.0
    segment_min: float = 40.0
    segment_max: float = 100.0
    max_bend_angle: float = 2.0 * math.pi / 3.0

    def __post_init__(self):
        if self.disks_per_segment < 2:
            raise ValueError("need at least 2 disks per segment")
        if self.tendon_pitch_radius <= 0:
            raise ValueError("tendon pitch radius must be positive")
        if not (0 < self.segment_min < self.segment_max):
            raise ValueError("segment length limits must satisfy 0 < min < max")
        if not (0 < self.tendon_min < self.tendon_max):
            raise ValueError("tendon length limits must satisfy 0 < min < max")
        if self.max_bend_angle <= 0:
            raise ValueError("max bend angle must be positive")
        angles = np.asarray(self.tendon_angles, dtype=float)
        if angles.shape != (3,):
            raise ValueError("exactly three tendon angles are required")
        diffs = np.abs((angles[:, None] - angles[None, :] + math.pi) % (2 * math.pi) - math.pi)
        if np.any(diffs[~np.eye(3, dtype=bool)] < 1e-9):
            raise ValueError("tendon angles must be pairwise distinct modulo 2*pi")

    @property
    def total_disks(self) -> int:
        return SEGMENTS * self.disks_per_segment

    @property
    def state_lower(self) -> np.ndarray:
        lo = np.empty(STATE_DIM)
        lo[TENDON_IDX.ravel()] = self.tendon_min
        lo[GAMMA_IDX] = self.segment_min
        return lo

    @property
    def state_upper(self) -> np.ndarray:
        hi = np.empty(STATE_DIM)
        hi[TENDON_IDX.ravel()] = self.tendon_max
        hi[GAMMA_IDX] = self.segment_max
        return hi

    def straight_state(self, segment_length: float | None = None) -> np.ndarray:
        """Straight, tendon-consistent state; defaults to mid-range segment length."""
        if segment_length is None:
            segment_length = 0.5 * (self.segment_min + self.segment_max)
        if not (self.segment_min <= segment_length <= self.segment_max):
            raise ValueError("segment length outside limits")
        x = np.full(STATE_DIM, float(segment_length))
        return x

    def clip_state(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.state_lower, self.state_upper)


def coupling_residuals(x: np.ndarray) -> np.ndarray:
    """Per-segment residual 3*gamma_j - sum_m q_jm (zero iff tendon-consistent)."""
    x = np.asarray(x, dtype=float)
    return 3.0 * x[..., GAMMA_IDX] - x[..., TENDON_IDX].sum(axis=-1)


def consistent_projection(x: np.ndarray) -> np.ndarray:
    """Shift each segment's tendon common mode so the coupling equality holds."""
    x = np.array(x, dtype=float)
    for j in range(SEGMENTS):
        q = x[..., TENDON_IDX[j]]
        shift = (q.sum(axis=-1) - 3.0 * x[..., GAMMA_IDX[j]]) / 3.0
        x[..., TENDON_IDX[j]] = q - shift[..., None]
    return x


def coupling_matrix() -> np.ndarray:
    """3x12 matrix A with A @ x = coupling_residuals(x)."""
    A = np.zeros((SEGMENTS, STATE_DIM))
    for j in range(SEGMENTS):
        A[j, TENDON_IDX[j]] = -1.0
        A[j, GAMMA_IDX[j]] = 3.0
    return A


def coupling_projector() -> np.ndarray:
    """Orthogonal projector onto the coupling-consistent subspace of R^12."""
    A = coupling_matrix()
    return np.eye(STATE_DIM) - A.T @ np.linalg.solve(A @ A.T, A)


def reduced_input_basis() -> np.ndarray:
    """12x9 basis E of the coupling-consistent input subspace.

    Per segment the three reduced coordinates are two zero-sum tendon
    differences plus the common extension rate; u = E @ v always satisfies
    3*u_gamma_j = sum_m u_q_jm.
    """
    m1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
    m2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    E = np.zeros((STATE_DIM, 9))
    for j in range(SEGMENTS):
        c = 3 * j
        E[TENDON_IDX[j], c] = m1
        E[TENDON_IDX[j], c + 1] = m2
        E[TENDON_IDX[j], c + 2] = 1.0
        E[GAMMA_IDX[j], c + 2] = 1.0
    return E
