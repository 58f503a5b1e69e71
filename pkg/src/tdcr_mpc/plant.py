"""Quasi-static simulated plant with held, clipped-Gaussian disturbances.

The true actuator state integrates the applied input and is hard-clamped at
the box limits. Disturbances are redrawn at a lower rate than the control
loop (zero-order hold in between) and enter the output map only:
y = f(x + w_x) + w_y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RobotGeometry, STATE_DIM
from .kinematics import forward_kinematics


@dataclass(frozen=True)
class DisturbanceSpec:
    sigma_x: float = 0.2       # state disturbance std (mm)
    sigma_y: float = 1.0       # output disturbance std per coordinate (mm)
    w_x_max: float = 2.0       # hard bound on |w_x| components
    w_y_max: float = 5.0       # hard bound on |w_y| components
    redraw_hz: float = 5.0

    def __post_init__(self):
        if self.sigma_x < 0 or self.sigma_y < 0 or self.w_x_max < 0 or self.w_y_max < 0:
            raise ValueError("disturbance magnitudes must be non-negative")
        if self.redraw_hz <= 0:
            raise ValueError("redraw frequency must be positive")


def apply_disturbance_state(x: np.ndarray, w_x: np.ndarray) -> np.ndarray:
    """State seen by the output map; w_x is already clipped at draw time."""
    return np.asarray(x, dtype=float) + np.asarray(w_x, dtype=float)


class Plant:
    """Simulated robot: integrator dynamics, disturbed PCC output map.

    One owner per instance; the control loop is expected to call step()
    exclusively. Reruns with the same seed reproduce trajectories bit-exactly.
    """

    def __init__(
        self,
        geom: RobotGeometry,
        spec: DisturbanceSpec,
        initial_state: np.ndarray | None = None,
        seed: int = 0,
    ):
        self.geom = geom
        self.spec = spec
        self.x = np.array(
            initial_state if initial_state is not None else geom.straight_state(),
            dtype=float,
        )
        if self.x.shape != (STATE_DIM,):
            raise ValueError(f"initial state must be ({STATE_DIM},)")
        self.rng = np.random.default_rng(seed)
        self.t = 0.0
        self._redraw_period = 1.0 / spec.redraw_hz
        self._next_redraw = self._redraw_period
        self.clamp_events: list[tuple[float, int]] = []
        self._draw()

    def _draw(self):
        s = self.spec
        self.w_x = np.clip(
            self.rng.normal(0.0, s.sigma_x, STATE_DIM), -s.w_x_max, s.w_x_max
        )
        self.w_y = np.clip(
            self.rng.normal(0.0, s.sigma_y, (self.geom.total_disks, 3)),
            -s.w_y_max,
            s.w_y_max,
        )

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Advance by dt under input u (mm/s) and return the new measurement."""
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("non-finite input")
        x_new = self.x + dt * u
        clamped = np.clip(x_new, self.geom.state_lower, self.geom.state_upper)
        hit = np.flatnonzero(clamped != x_new)
        for k in hit:
            self.clamp_events.append((self.t + dt, int(k)))
        self.x = clamped
        self.t += dt
        while self.t >= self._next_redraw - 1e-12:
            self._draw()
            self._next_redraw += self._redraw_period
        return self.measure()

    def measure(self) -> np.ndarray:
        """Disturbed output y = f(x + w_x) + w_y with the currently held draws."""
        return forward_kinematics(apply_disturbance_state(self.x, self.w_x), self.geom) + self.w_y

    def measure_ee_only(self) -> np.ndarray:
        """Tip position only (hardware-analog measurement mode)."""
        return self.measure()[-1]
