"""Receding-horizon nominal controller with hard whole-body collision constraints.

The nonlinear program is transcribed by single shooting over the inputs of the
short horizon. Tendon coupling is eliminated by construction: inputs live in a
9-per-step reduced basis whose image always satisfies the per-segment equality,
so the remaining constraints are the safe-zone margin at every disk, the
curvature limits and the state/input boxes.

Each SQP iteration linearizes those constraints (finite-difference shape
Jacobians, analytic distance gradients), builds a Gauss-Newton model of the
quadratic cost and solves the subproblem through its dual, a box-constrained
QP in the multipliers. Capping the multipliers at the penalty weight makes the
subproblem an exact-l1 elastic step, and an l1 merit line search globalizes
the iteration. Returned solutions are always feasible: if the loop runs out of
iterations the best feasible iterate is returned instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxqp import box_qp
from .errors import Infeasible
from .geometry import (
    GAMMA_IDX,
    SEGMENTS,
    STATE_DIM,
    TENDON_IDX,
    RobotGeometry,
    coupling_residuals,
    reduced_input_basis,
)
from .kinematics import (
    curvature_gradient,
    forward_kinematics,
    forward_kinematics_batch,
    shape_jacobian_many,
)
from .mesh_sdf import SafeZone, signed_distance_batch

_MU_ELASTIC_INIT = 1e8
_MU_ELASTIC_MAX = 1e12
_RIDGE_H = 1e-8
_RIDGE_DUAL = 1e-10


def _default_q():
    return 1000.0 * np.eye(3)


def _default_rs():
    return 10.0 * np.eye(STATE_DIM)


def _default_u_min():
    return np.full(STATE_DIM, -10.0)


def _default_u_max():
    return np.full(STATE_DIM, 10.0)


@dataclass(frozen=True)
class MpcParams:
    horizon: int = 2
    dt: float = 1.0 / 30.0
    q_weight: np.ndarray = field(default_factory=_default_q)      # 3x3, EE error
    r_weight: np.ndarray = field(default_factory=_default_rs)     # 12x12, input
    s_weight: np.ndarray = field(default_factory=_default_rs)     # 12x12, state
    c_d: float = 5.5                                              # safe margin (mm)
    u_min: np.ndarray = field(default_factory=_default_u_min)     # mm/s
    u_max: np.ndarray = field(default_factory=_default_u_max)
    tol_c: float = 1e-6          # constraint feasibility tolerance (mm)
    tol_g: float = 1e-8          # relative optimality tolerance on the cost
    max_iter: int = 50

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.c_d <= 0:
            raise ValueError("safe margin must be positive")
        if np.any(self.u_min > 0) or np.any(self.u_max < 0):
            raise ValueError("input box must contain zero")
        for w, shape in ((self.q_weight, (3, 3)), (self.r_weight, (12, 12)), (self.s_weight, (12, 12))):
            if np.asarray(w).shape != shape:
                raise ValueError(f"weight must have shape {shape}")

    @classmethod
    def from_scalars(cls, q=1000.0, r=10.0, s=10.0, u_limit=10.0, **kwargs):
        return cls(
            q_weight=q * np.eye(3),
            r_weight=r * np.eye(STATE_DIM),
            s_weight=s * np.eye(STATE_DIM),
            u_min=np.full(STATE_DIM, -abs(u_limit)),
            u_max=np.full(STATE_DIM, abs(u_limit)),
            **kwargs,
        )


@dataclass
class MpcSolution:
    states: np.ndarray          # (N+1, 12) nominal states, index 0 is the start
    inputs: np.ndarray          # (N, 12), inputs[i-1] acts between states i-1 and i
    outputs: np.ndarray         # (N+1, 3n, 3) nominal shapes
    cost: float
    status: str                 # 'optimal' | 'max_iter' | 'infeasible'
    iterations: int = 0
    n_active: int = 0
    multipliers: np.ndarray | None = None   # dual warm start for the next tick


def initialize(previous: MpcSolution | None, geom: RobotGeometry) -> np.ndarray:
    """Nominal start state for the next tick.

    First call: straight configuration centered in the segment-length limits.
    Afterwards: the previous prediction advanced by its applied input.
    """
    if previous is None:
        return geom.straight_state()
    return previous.states[1].copy()


def stage_cost(x, u, p_d, params: MpcParams, geom: RobotGeometry) -> float:
    """e'Qe + u'Ru + x'Sx with e the EE error of state x against target p_d."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    cost = float(u @ (params.r_weight @ u) + x @ (params.s_weight @ x))
    if p_d is not None:
        e = forward_kinematics(x, geom)[-1] - np.asarray(p_d, dtype=float)
        cost += float(e @ (params.q_weight @ e))
    return cost


def _segment_curvatures_raw(x: np.ndarray, geom: RobotGeometry) -> np.ndarray:
    """Curvatures without limit checks (constraint evaluation must not raise)."""
    beta = np.asarray(geom.tendon_angles)
    gamma = x[GAMMA_IDX]
    deltas = x[TENDON_IDX] - gamma[:, None]
    a = (deltas * np.cos(beta)).sum(axis=1)
    b = (deltas * np.sin(beta)).sum(axis=1)
    return 2.0 * np.hypot(a, b) / (3.0 * gamma * geom.tendon_pitch_radius)


@dataclass
class ConstraintResiduals:
    """Stacked residuals; inequalities are feasible when positive."""

    sdf: np.ndarray         # d(p_i) - c_d per disk (empty without a zone)
    coupling: np.ndarray    # equality 3*gamma_j - sum q_jm
    curvature: np.ndarray   # kappa_max(gamma_j) - kappa_j
    state_box: np.ndarray   # x - lo, hi - x
    input_box: np.ndarray   # u - u_min, u_max - u

    def stacked(self) -> np.ndarray:
        return np.concatenate(
            [self.sdf, self.coupling, self.curvature, self.state_box, self.input_box]
        )

    def feasible(self, tol: float) -> bool:
        ineq = np.concatenate([self.sdf, self.curvature, self.state_box, self.input_box])
        return bool(np.all(ineq > -tol) and np.all(np.abs(self.coupling) <= tol))


def evaluate_constraints(
    x, u, zone: SafeZone | None, params: MpcParams, geom: RobotGeometry
) -> ConstraintResiduals:
    """Residuals of every hard constraint at one state/input pair."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if zone is not None:
        shape = forward_kinematics(x, geom)
        d, _, _ = signed_distance_batch(zone, shape)
        sdf = d - params.c_d
    else:
        sdf = np.empty(0)
    kappa = _segment_curvatures_raw(x, geom)
    curvature = geom.max_bend_angle / x[GAMMA_IDX] - kappa
    state_box = np.concatenate([x - geom.state_lower, geom.state_upper - x])
    input_box = np.concatenate([u - params.u_min, params.u_max - u])
    return ConstraintResiduals(
        sdf=sdf,
        coupling=coupling_residuals(x),
        curvature=curvature,
        state_box=state_box,
        input_box=input_box,
    )


# -- solver internals --------------------------------------------------------


class _Transcription:
    """Maps between the reduced decision vector and states/inputs."""

    def __init__(self, params: MpcParams, geom: RobotGeometry):
        self.N = params.horizon
        self.dt = params.dt
        self.E = reduced_input_basis()
        self.nv = 9 * self.N
        # d u_i / d z and d x_i / d z, i = 1..N
        self.A_u = []
        self.A_x = []
        for i in range(1, self.N + 1):
            Au = np.zeros((STATE_DIM, self.nv))
            Au[:, 9 * (i - 1) : 9 * i] = self.E
            self.A_u.append(Au)
            Ax = np.zeros((STATE_DIM, self.nv))
            for l in range(i):
                Ax[:, 9 * l : 9 * (l + 1)] = self.dt * self.E
            self.A_x.append(Ax)

    def rollout(self, x0, z):
        """Sequential rollout so the integrator identity holds exactly."""
        states = np.empty((self.N + 1, STATE_DIM))
        inputs = np.empty((self.N, STATE_DIM))
        states[0] = x0
        for i in range(self.N):
            inputs[i] = self.E @ z[9 * i : 9 * (i + 1)]
            states[i + 1] = states[i] + self.dt * inputs[i]
        return states, inputs

    def z_from_inputs(self, inputs):
        """Least-squares reduced coordinates; exact for coupling-consistent inputs."""
        scale = np.array([1.0, 1.0, 0.25] * SEGMENTS)   # (E'E)^-1 diagonal
        return np.concatenate([scale * (self.E.T @ u) for u in inputs])


class _Model:
    """Cost value/model and constraint linearization at one iterate."""

    __slots__ = ("f", "grad", "H", "r", "G", "viol", "states", "inputs", "shapes")


def _total_violation(r):
    return float(np.sum(np.maximum(-r, 0.0)))


class _Evaluator:
    def __init__(self, x0, p_d, zone, params, geom, trans):
        self.x0 = x0
        self.p_d = None if p_d is None else np.asarray(p_d, dtype=float)
        self.zone = zone
        self.params = params
        self.geom = geom
        self.trans = trans
        self.n_disks = geom.total_disks
        self._theta = geom.max_bend_angle

    def merit_terms(self, z):
        """Cost and constraint violation only (cheap line-search evaluation)."""
        states, inputs = self.trans.rollout(self.x0, z)
        shapes = forward_kinematics_batch(states[1:], self.geom)
        f = self._cost(states, inputs, shapes)
        r = self._residuals(states, inputs, shapes)
        return f, _total_violation(r), r

    def _cost(self, states, inputs, shapes):
        p = self.params
        f = 0.0
        for i in range(1, self.trans.N + 1):
            x, u = states[i], inputs[i - 1]
            f += u @ (p.r_weight @ u) + x @ (p.s_weight @ x)
            if self.p_d is not None:
                e = shapes[i - 1][-1] - self.p_d
                f += e @ (p.q_weight @ e)
        return float(f)

    def _sdf_all(self, shapes, with_gradients=False):
        """One mesh query covering every predicted disk position."""
        flat = shapes.reshape(-1, 3)
        d, _, grad = signed_distance_batch(self.zone, flat)
        N = self.trans.N
        if with_gradients:
            return d.reshape(N, -1), grad.reshape(N, -1, 3)
        return d.reshape(N, -1), None

    def _residuals(self, states, inputs, shapes):
        p, geom = self.params, self.geom
        d_all = self._sdf_all(shapes)[0] if self.zone is not None else None
        rows = []
        for i in range(1, self.trans.N + 1):
            x = states[i]
            if d_all is not None:
                rows.append(d_all[i - 1] - p.c_d)
            kappa = _segment_curvatures_raw(x, geom)
            rows.append(self._theta / x[GAMMA_IDX] - kappa)
            rows.append(x - geom.state_lower)
            rows.append(geom.state_upper - x)
            u = inputs[i - 1]
            rows.append(u - p.u_min)
            rows.append(p.u_max - u)
        return np.concatenate(rows)

    def full(self, z) -> _Model:
        """Cost gradient/Gauss-Newton model plus linearized constraint rows."""
        p, geom, trans = self.params, self.geom, self.trans
        states, inputs = trans.rollout(self.x0, z)
        shapes = forward_kinematics_batch(states[1:], geom)
        jacobians = shape_jacobian_many(states[1:], geom)   # (N, 3n, 3, 12)
        if self.zone is not None:
            d_all, grad_all = self._sdf_all(shapes, with_gradients=True)

        m = _Model()
        m.states, m.inputs, m.shapes = states, inputs, shapes
        nv = trans.nv
        f = 0.0
        grad = np.zeros(nv)
        H = np.zeros((nv, nv))
        rows, G_rows = [], []
        for i in range(1, trans.N + 1):
            x, u = states[i], inputs[i - 1]
            A_x, A_u = trans.A_x[i - 1], trans.A_u[i - 1]
            jac = jacobians[i - 1]                       # (3n, 3, 12)

            f += u @ (p.r_weight @ u) + x @ (p.s_weight @ x)
            RAu = p.r_weight @ A_u
            SAx = p.s_weight @ A_x
            grad += 2.0 * (A_u.T @ (p.r_weight @ u) + A_x.T @ (p.s_weight @ x))
            H += 2.0 * (A_u.T @ RAu + A_x.T @ SAx)
            if self.p_d is not None:
                e = shapes[i - 1][-1] - self.p_d
                f += e @ (p.q_weight @ e)
                Je = jac[-1] @ A_x                       # (3, nv)
                grad += 2.0 * Je.T @ (p.q_weight @ e)
                H += 2.0 * Je.T @ (p.q_weight @ Je)

            if self.zone is not None:
                rows.append(d_all[i - 1] - p.c_d)
                # chain rule: dd/dz = grad_d' * J_disk * dx/dz
                G_rows.append(np.einsum("lj,ljk->lk", grad_all[i - 1], jac) @ A_x)
            kappa = _segment_curvatures_raw(x, geom)
            rows.append(self._theta / x[GAMMA_IDX] - kappa)
            crow = np.zeros((SEGMENTS, STATE_DIM))
            for j in range(SEGMENTS):
                crow[j] = -curvature_gradient(x, geom, j)
                crow[j, GAMMA_IDX[j]] -= self._theta / x[GAMMA_IDX[j]] ** 2
            G_rows.append(crow @ A_x)
            rows.append(x - geom.state_lower)
            G_rows.append(A_x)
            rows.append(geom.state_upper - x)
            G_rows.append(-A_x)
            rows.append(u - p.u_min)
            G_rows.append(A_u)
            rows.append(p.u_max - u)
            G_rows.append(-A_u)

        H += _RIDGE_H * np.eye(nv)
        m.f = float(f)
        m.grad = grad
        m.H = H
        m.r = np.concatenate(rows)
        m.G = np.vstack(G_rows)
        m.viol = _total_violation(m.r)
        return m


def _polish_step(m: _Model, d: np.ndarray, lam: np.ndarray, Hinv_g: np.ndarray, tol: float):
    """Re-solve the step on the dual's active set as an equality-constrained QP.

    The dual box QP leaves multipliers slightly inexact, which shows up as
    residual violations of the active linearized rows. Pinning those rows and
    solving the KKT system directly restores them to solver precision; the
    polished step is kept only when it leaves every other row feasible.
    """
    lam_max = float(np.max(lam, initial=0.0))
    active = lam > 1e-8 * max(1.0, lam_max)
    if not np.any(active):
        return d
    A = m.G[active]
    b = -m.r[active]
    Hinv_AT = np.linalg.solve(m.H, A.T)
    S = A @ Hinv_AT
    rhs = b + A @ Hinv_g
    nu, *_ = np.linalg.lstsq(S, rhs, rcond=None)
    d_pol = Hinv_AT @ nu - Hinv_g
    res = m.r + m.G @ d_pol
    if res.min() >= -0.1 * tol or _total_violation(res) <= _total_violation(m.r + m.G @ d):
        return d_pol
    return d


def _second_order_correction(m: _Model, d: np.ndarray, r_try: np.ndarray, z):
    """Minimum-norm correction restoring rows that the full step left violated.

    The violation of an active constraint after a full SQP step is second
    order in the step (curvature of the distance field); correcting it with
    the current Jacobian rows lets the merit function accept the full step
    instead of collapsing the step size.
    """
    bad = r_try < 0.0
    if not np.any(bad):
        return None
    A = m.G[bad]
    target = -r_try[bad]
    AAT = A @ A.T
    AAT[np.diag_indices_from(AAT)] += 1e-10 * max(1.0, np.trace(AAT) / len(AAT))
    try:
        dc = A.T @ np.linalg.solve(AAT, target)
    except np.linalg.LinAlgError:
        return None
    if np.linalg.norm(dc) > 0.5 * np.linalg.norm(d) + 1e-12:
        return None     # correction too large to be a curvature fix
    return z + d + dc


def _check_initial_state(x0, zone, params, geom):
    res = evaluate_constraints(x0, np.zeros(STATE_DIM), zone, params, geom)
    if not res.feasible(max(params.tol_c, 1e-9)):
        raise Infeasible(
            "nominal start state violates hard constraints; no input may be applied"
        )
    res = evaluate_constraints(x0, np.zeros(STATE_DIM), zone, params, geom)
    if not res.feasible(max(params.tol_c, 1e-9)):
        raise Infeasible(
            "nominal start state violates hard constraints; no input may be applied"
        )


def solve(
    x0,
    p_d,
    zone: SafeZone | None,
    params: MpcParams,
    geom: RobotGeometry,
    warm_start: MpcSolution | None = None,
) -> MpcSolution:
    """Solve the horizon problem from nominal state x0 toward target p_d.

    Raises Infeasible when x0 itself violates the state constraints. Returned
    solutions always satisfy every hard constraint within tol_c; status is
    'optimal' when the SQP converged and 'max_iter' when the best feasible
    iterate found is returned instead.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    _check_initial_state(x0, zone, params, geom)
    trans = _Transcription(params, geom)
    ev = _Evaluator(x0, p_d, zone, params, geom, trans)

    z = np.zeros(trans.nv)
    warm_used = False
    if warm_start is not None and warm_start.inputs.shape == (params.horizon, STATE_DIM):
        shifted = np.vstack([warm_start.inputs[1:], warm_start.inputs[-1:]])
        z = trans.z_from_inputs(shifted)
        warm_used = True

    mu_elastic = _MU_ELASTIC_INIT
    mu_merit = 10.0
    lam = None
    if warm_start is not None and warm_start.multipliers is not None:
        lam = warm_start.multipliers.copy()
    best_z = None
    best_f = math.inf
    status = "max_iter"
    it = 0
    tiny_steps = 0
    f_z = viol_z = None      # merit terms of the current iterate, when known

    for it in range(1, params.max_iter + 1):
        m = ev.full(z)
        if it == 1 and warm_used and m.viol > params.tol_c:
            # shifted warm start infeasible (e.g. target switch): fall back to rest
            z = np.zeros(trans.nv)
            warm_used = False
            m = ev.full(z)
        f_z, viol_z = m.f, m.viol
        feasible = m.viol <= params.tol_c
        if feasible and m.f < best_f:
            best_f, best_z = m.f, z.copy()

        # dual of the elastic QP subproblem: box-constrained in the multipliers
        Hinv_GT = np.linalg.solve(m.H, m.G.T)
        Hinv_g = np.linalg.solve(m.H, m.grad)
        D = m.G @ Hinv_GT
        D[np.diag_indices_from(D)] += _RIDGE_DUAL * max(1.0, np.trace(D) / len(D))
        q_dual = m.r - m.G @ Hinv_g
        if lam is None or len(lam) != len(q_dual):
            lam = np.zeros(len(q_dual))
        lam, _ = box_qp(D, q_dual, 0.0, mu_elastic, x0=lam)
        d = Hinv_GT @ lam - Hinv_g
        d = _polish_step(m, d, lam, Hinv_g, params.tol_c)

        lin_viol = _total_violation(m.r + m.G @ d)
        if np.max(lam, initial=0.0) >= 0.999 * mu_elastic and lin_viol > params.tol_c:
            mu_elastic = min(mu_elastic * 10.0, _MU_ELASTIC_MAX)
        mu_merit = max(mu_merit, 2.0 * float(np.max(lam, initial=0.0)))

        pred_red = -(m.grad @ d + 0.5 * d @ (m.H @ d)) + mu_merit * (m.viol - lin_viol)
        if feasible and pred_red <= params.tol_g * max(1.0, abs(m.f)):
            status = "optimal"
            if m.f < best_f or best_z is None:
                best_f, best_z = m.f, z.copy()
            break
        if np.max(np.abs(d)) < 1e-12:
            status = "optimal" if feasible else "max_iter"
            break

        phi0 = m.f + mu_merit * m.viol
        accepted = False

        # full step, then one second-order correction against constraint
        # curvature (Maratos guard), then plain backtracking
        z_try = z + d
        f_try, viol_try, r_try = ev.merit_terms(z_try)
        if f_try + mu_merit * viol_try <= phi0 - 0.01 * max(pred_red, 0.0):
            accepted = True
        else:
            z_soc = _second_order_correction(m, d, r_try, z)
            if z_soc is not None:
                f_soc, viol_soc, _ = ev.merit_terms(z_soc)
                if f_soc + mu_merit * viol_soc <= phi0 - 0.01 * max(pred_red, 0.0):
                    z_try, f_try, viol_try = z_soc, f_soc, viol_soc
                    accepted = True
        if not accepted:
            alpha = 0.5
            for _ in range(8):
                z_try = z + alpha * d
                f_try, viol_try, _ = ev.merit_terms(z_try)
                if f_try + mu_merit * viol_try <= phi0 - 0.01 * alpha * max(pred_red, 0.0):
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            status = "optimal" if feasible else "max_iter"
            break
        step_size = float(np.max(np.abs(z_try - z)))
        z = z_try
        improvement = phi0 - (f_try + mu_merit * viol_try)
        f_z, viol_z = f_try, viol_try
        if viol_try <= params.tol_c and improvement <= params.tol_g * max(1.0, abs(phi0)):
            # merit stationary at a feasible point
            if f_try < best_f:
                best_f, best_z = f_try, z.copy()
            status = "optimal"
            break
        if step_size < 1e-7:
            tiny_steps += 1
            if tiny_steps >= 2:
                status = "optimal" if viol_try <= params.tol_c else "max_iter"
                break
        else:
            tiny_steps = 0

    # final selection: never return an infeasible iterate
    if f_z is None:
        f_z, viol_z, _ = ev.merit_terms(z)
    if viol_z <= params.tol_c and f_z <= best_f:
        chosen, chosen_cost = z, f_z
    elif best_z is not None:
        chosen, chosen_cost = best_z, best_f
        if status == "optimal":
            status = "max_iter"
    else:
        # cannot happen from a feasible x0 (z = 0 holds the state), kept as a guard
        raise Infeasible("no feasible iterate found")

    states, inputs = trans.rollout(x0, chosen)
    outputs = np.concatenate(
        [forward_kinematics(x0, geom)[None], forward_kinematics_batch(states[1:], geom)]
    )
    n_active = int(np.sum(lam > 1e-6 * max(1.0, float(np.max(lam, initial=0.0))))) if lam is not None else 0
    return MpcSolution(
        states=states,
        inputs=inputs,
        outputs=outputs,
        cost=chosen_cost,
        status=status,
        iterations=it,
        n_active=n_active,
        multipliers=lam,
    )
