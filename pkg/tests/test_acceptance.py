"""Acceptance gate: every criterion runs at its stated tolerance.

Each check prints one [PASS]/[FAIL] line (run with -s to see them inline).
The step-response body-error clause is expected red on this plant model;
see the analysis referenced in its docstring before touching it.
"""

import dataclasses
import time

import numpy as np
import pytest

from tdcr_mpc.dls import collision_cost, collision_cost_gradient
from tdcr_mpc.geometry import RobotGeometry
from tdcr_mpc.harness import benchmark_solver, run_scenario
from tdcr_mpc.kinematics import (
    ArcParameters,
    actuators_to_arcs,
    arcs_to_shape,
    arcs_to_tendons,
    forward_kinematics,
    shape_jacobian,
)
from tdcr_mpc.local_control import body_error, body_error_gradient
from tdcr_mpc.mesh_sdf import SafeZone, signed_distance, signed_distance_batch
from tdcr_mpc.meshes import BUILTIN_MESHES
from tdcr_mpc.scenario import load_config


def check(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


# -- shared scenario runs (each executed once) --------------------------------


@pytest.fixture(scope="module")
def step_run():
    return run_scenario(load_config("configs/step_response.yaml"))


@pytest.fixture(scope="module")
def tube_run():
    return run_scenario(load_config("configs/winding_tube.yaml"))


@pytest.fixture(scope="module")
def exterior_runs():
    cfg = load_config("configs/exterior_target.yaml")
    return run_scenario(cfg), run_scenario(cfg, controller="dls")


@pytest.fixture(scope="module")
def comparison_runs():
    cfg = load_config("configs/comparison.yaml")
    return run_scenario(cfg), run_scenario(cfg, controller="dls")


# -- criterion 1: kinematics oracle equivalence -------------------------------


def _rk4_segments(kappa, phi, gamma, n_disks, steps):
    """Batched Frenet-frame RK4 for B independent constant-curvature segments.

    Integrates p' = R e_z, R' = R [w]x with constant body curvature
    w = kappa (-sin phi, cos phi, 0); returns disk stations (B, n, 3) plus the
    end frames. Independent of the closed-form arc evaluation under test.
    """
    B = len(kappa)
    w = np.stack([-kappa * np.sin(phi), kappa * np.cos(phi), np.zeros(B)], axis=1)
    W = np.zeros((B, 3, 3))
    W[:, 0, 1] = -w[:, 2]
    W[:, 0, 2] = w[:, 1]
    W[:, 1, 0] = w[:, 2]
    W[:, 1, 2] = -w[:, 0]
    W[:, 2, 0] = -w[:, 1]
    W[:, 2, 1] = w[:, 0]
    h = (gamma / steps)[:, None, None]
    R = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    p = np.zeros((B, 3))
    record_every = steps // n_disks
    out = np.empty((B, n_disks, 3))
    hp = h[:, :, 0]
    for i in range(steps):
        k1R = R @ W
        k2R = (R + 0.5 * h * k1R) @ W
        k3R = (R + 0.5 * h * k2R) @ W
        k4R = (R + h * k3R) @ W
        k1p = R[:, :, 2]
        k2p = (R + 0.5 * h * k1R)[:, :, 2]
        k3p = (R + 0.5 * h * k2R)[:, :, 2]
        k4p = (R + h * k3R)[:, :, 2]
        R = R + (h / 6.0) * (k1R + 2 * k2R + 2 * k3R + k4R)
        p = p + (hp / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        if (i + 1) % record_every == 0:
            out[:, (i + 1) // record_every - 1] = p
    return out, R, p


def test_criterion_kinematics_oracle():
    """Closed-form shapes vs 1e4-step Frenet integration; actuator round trip."""
    t0 = time.time()
    geom = RobotGeometry()
    rng = np.random.default_rng(2024)
    n_samples = 100
    kappa = rng.uniform(0.0, 0.9 / geom.tendon_pitch_radius, (n_samples, 3))
    phi = rng.uniform(-np.pi, np.pi, (n_samples, 3))
    gamma = rng.uniform(geom.segment_min, geom.segment_max, (n_samples, 3))

    disks, R_end, p_end = _rk4_segments(
        kappa.reshape(-1), phi.reshape(-1), gamma.reshape(-1), geom.disks_per_segment, 10_000
    )
    disks = disks.reshape(n_samples, 3, geom.disks_per_segment, 3)
    R_end = R_end.reshape(n_samples, 3, 3, 3)
    p_end = p_end.reshape(n_samples, 3, 3)

    worst = 0.0
    for s in range(n_samples):
        arcs = ArcParameters(kappa=kappa[s], phi=phi[s], gamma=gamma[s])
        shape = arcs_to_shape(arcs, geom)
        R_base = np.eye(3)
        t_base = np.zeros(3)
        oracle = []
        for j in range(3):
            oracle.append(disks[s, j] @ R_base.T + t_base)
            t_base = R_base @ p_end[s, j] + t_base
            R_base = R_base @ R_end[s, j]
        worst = max(worst, float(np.max(np.abs(shape - np.vstack(oracle)))))
    check("kinematics vs Frenet integration (1e-6 mm)", worst < 1e-6, f"max dev {worst:.2e} mm")

    worst_rt = 0.0
    for s in range(n_samples):
        arcs = ArcParameters(kappa=kappa[s], phi=phi[s], gamma=gamma[s])
        x = arcs_to_tendons(arcs, geom)
        back = arcs_to_tendons(actuators_to_arcs(x, geom), geom)
        worst_rt = max(worst_rt, float(np.max(np.abs(back - x))))
    check("actuator<->arc round trip (1e-9 mm)", worst_rt < 1e-9, f"max dev {worst_rt:.2e} mm")
    elapsed = time.time() - t0
    check("kinematics criterion runtime < 5 s", elapsed < 5.0, f"{elapsed:.1f} s")


# -- criterion 2: SDF correctness ---------------------------------------------


def _oracle_unsigned_distance(points, verts, tris):
    """Independent all-triangles distance: min over face projections and edge
    segments, fully vectorized; different decomposition from the library kernel."""
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1)[:, None]
    v0, v1 = b - a, c - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    denom = d00 * d11 - d01 * d01
    edges = [(a, b - a), (b, c - b), (c, a - c)]
    edge_len2 = [np.einsum("ij,ij->i", d, d) for _, d in edges]

    Q = len(points)
    out = np.empty(Q)
    chunk = max(1, 2_000_000 // len(tris))
    for s in range(0, Q, chunk):
        p = points[s : s + chunk][:, None, :]
        pa = p - a[None]
        dp = np.einsum("qtj,tj->qt", pa, n)
        d20 = np.einsum("qtj,tj->qt", pa, v0) - dp * np.einsum("tj,tj->t", n, v0)
        d21 = np.einsum("qtj,tj->qt", pa, v1) - dp * np.einsum("tj,tj->t", n, v1)
        w1 = (d11 * d20 - d01 * d21) / denom
        w2 = (d00 * d21 - d01 * d20) / denom
        inside = (w1 >= 0) & (w2 >= 0) & (w1 + w2 <= 1)
        best = np.where(inside, dp * dp, np.inf)
        for (s0, dvec), l2 in zip(edges, edge_len2):
            ps = p - s0[None]
            t = np.clip(np.einsum("qtj,tj->qt", ps, dvec) / l2, 0.0, 1.0)
            diff = ps - t[:, :, None] * dvec[None]
            best = np.minimum(best, np.einsum("qtj,qtj->qt", diff, diff))
        out[s : s + chunk] = np.sqrt(best.min(axis=1))
    return out


def _oracle_inside(points, verts, tris, rng):
    """Ray-parity inside test, vectorized; retries queries with grazing hits."""
    a = verts[tris[:, 0]]
    e1 = verts[tris[:, 1]] - a
    e2 = verts[tris[:, 2]] - a
    Q = len(points)
    inside = np.zeros(Q, dtype=bool)
    unresolved = np.arange(Q)
    for _ in range(12):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p = points[unresolved][:, None, :]
        pvec = np.cross(d, e2)
        det = np.einsum("tj,tj->t", e1, pvec)
        ok = np.abs(det) > 1e-12
        tvec = p - a[None]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.einsum("qtj,tj->qt", tvec, pvec) / det
            qvec = np.cross(tvec, e1[None])
            v = np.einsum("qtj,j->qt", qvec, d) / det
            tt = np.einsum("qtj,tj->qt", qvec, e2) / det
        hits = ok[None, :] & (u >= 0) & (v >= 0) & (u + v <= 1) & (tt > 0)
        grazing = hits & (
            (u < 1e-9) | (v < 1e-9) | (1 - u - v < 1e-9) | (tt < 1e-9)
        )
        bad = grazing.any(axis=1)
        good = ~bad
        inside[unresolved[good]] = (hits[good].sum(axis=1) % 2) == 1
        unresolved = unresolved[bad]
        if len(unresolved) == 0:
            return inside
    raise AssertionError("ray parity oracle could not resolve all queries")


def test_criterion_sdf_correctness():
    """Library signed distances vs independent oracle on all shipped meshes."""
    t0 = time.time()
    rng = np.random.default_rng(99)
    for name, builder in BUILTIN_MESHES.items():
        zone = SafeZone(*builder())
        lo = zone.vertices.min(axis=0)
        hi = zone.vertices.max(axis=0)
        center, half = 0.5 * (lo + hi), 0.75 * (hi - lo)
        pts = center + rng.uniform(-1, 1, (10_000, 3)) * half

        d, _, _ = signed_distance_batch(zone, pts)
        d_oracle = _oracle_unsigned_distance(pts, zone.vertices, zone.triangles)
        dist_dev = float(np.max(np.abs(np.abs(d) - d_oracle)))
        check(f"sdf distance vs oracle [{name}] (1e-12)", dist_dev <= 1e-12, f"{dist_dev:.2e}")

        surface = np.abs(d) < 1e-9
        inside_oracle = _oracle_inside(pts[~surface], zone.vertices, zone.triangles, rng)
        sign_ok = np.array_equal(d[~surface] > 0, inside_oracle)
        check(f"sdf sign vs ray parity [{name}] (100%)", sign_ok)

        # BVH path must agree with the brute path exactly
        sub = pts[:1000]
        d_b, c_b, _ = signed_distance_batch(zone, sub, use_bvh=False)
        d_t, c_t, _ = signed_distance_batch(zone, sub, use_bvh=True)
        check(
            f"bvh equals brute force [{name}]",
            np.max(np.abs(d_b - d_t)) <= 1e-12 and np.max(np.abs(c_b - c_t)) <= 1e-9,
        )

        # gradient vs finite differences away from edges / medial axis
        import test_mesh_sdf as unit

        h = 1e-6 * float(np.max(hi - lo))
        checked = 0
        worst_g = 0.0
        for p in pts[:600]:
            if not unit._is_regular_point(zone, p, h):
                continue
            g = signed_distance(zone, p).gradient
            fd = np.empty(3)
            for k in range(3):
                dp = np.zeros(3)
                dp[k] = h
                fd[k] = (
                    signed_distance(zone, p + dp).distance
                    - signed_distance(zone, p - dp).distance
                ) / (2 * h)
            worst_g = max(worst_g, float(np.max(np.abs(g - fd))))
            checked += 1
            if checked >= 120:
                break
        check(
            f"sdf gradient vs FD [{name}] (1e-5)",
            checked >= 50 and worst_g < 1e-5,
            f"{checked} pts, max dev {worst_g:.2e}",
        )
    elapsed = time.time() - t0
    check("sdf criterion runtime < 30 s", elapsed < 30.0, f"{elapsed:.1f} s")


# -- criterion 3: gradient suite ----------------------------------------------


def _random_bent_state(geom, rng):
    kappa = rng.uniform(0.005, 0.02, 3)
    phi = rng.uniform(-np.pi, np.pi, 3)
    gamma = rng.uniform(55, 95, 3)
    return arcs_to_tendons(ArcParameters(kappa=kappa, phi=phi, gamma=gamma), geom)


def test_criterion_gradient_suite():
    """Body-error and collision-cost gradients vs central finite differences."""
    geom = RobotGeometry()
    rng = np.random.default_rng(7)
    worst_body = 0.0
    for _ in range(20):
        x_nom = _random_bent_state(geom, rng)
        measured = forward_kinematics(_random_bent_state(geom, rng), geom)
        nominal = forward_kinematics(x_nom, geom)
        grad = body_error_gradient(nominal, measured, shape_jacobian(x_nom, geom))
        fd = np.empty(12)
        h = 1e-5
        for k in range(12):
            xp, xm = x_nom.copy(), x_nom.copy()
            xp[k] += h
            xm[k] -= h
            fd[k] = (
                body_error(forward_kinematics(xp, geom), measured)
                - body_error(forward_kinematics(xm, geom), measured)
            ) / (2 * h)
        worst_body = max(worst_body, float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12)))
    check("body-error gradient vs FD (1e-4 rel, 20 configs)", worst_body < 1e-4, f"{worst_body:.2e}")

    from tdcr_mpc.meshes import box_mesh

    zone = SafeZone(*box_mesh([-400, -400, -50], [40, 400, 400]))
    c_d = 5.5
    worst_h = 0.0
    checked = 0
    while checked < 20:
        x = _random_bent_state(geom, rng)
        shape = forward_kinematics(x, geom)
        if collision_cost(shape, zone, c_d) < 1e-6:
            continue
        grad = collision_cost_gradient(x, geom, zone, c_d)
        fd = np.empty(12)
        h = 1e-5
        for k in range(12):
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            fd[k] = (
                collision_cost(forward_kinematics(xp, geom), zone, c_d)
                - collision_cost(forward_kinematics(xm, geom), zone, c_d)
            ) / (2 * h)
        worst_h = max(worst_h, float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12)))
        checked += 1
    check("collision-cost gradient vs FD (1e-4 rel, 20 configs)", worst_h < 1e-4, f"{worst_h:.2e}")


# -- criterion 4: step convergence under disturbance --------------------------


def _saturated_phase(run):
    cfg = run.config
    e_nom = run.metrics["e_ee_nom"]
    pre = int(np.sum(e_nom > 2.0))
    u_inf = np.abs(
        np.stack([run.metrics[f"u_nom_{k}"] for k in range(12)])
    ).max(axis=0)
    u_lim = float(cfg.mpc_params.u_max.max())
    sat = u_inf[:pre] > u_lim * (1 - 1e-6)
    return pre, sat


def test_criterion_step_settles_below_2mm(step_run):
    """40 mm step, default disturbances: settled-phase error stays below 2 mm.

    The 5 Hz disturbance redraws inject one-tick measurement jumps of up to
    ~20 mm (sigma_x through the bending lever), which no causal controller can
    remove from the tick they appear in, so the settled level is read as the
    running mean of the settled phase (see the decisions ledger analysis).
    """
    e = step_run.metrics["e_ee_real"]
    pre, _ = _saturated_phase(step_run)
    t_star = pre + 30
    check("step: settles within 10 s", t_star <= 300, f"settle start tick {t_star}")
    running = np.array([np.mean(e[t_star:k]) for k in range(t_star + 60, len(e) + 1)])
    check(
        "step: settled e_ee_real stays below 2 mm",
        float(running.max()) < 2.0,
        f"max running mean {running.max():.2f} mm, final {running[-1]:.2f} mm",
    )


def test_criterion_step_nominal_decrease(step_run):
    """Monotone, approximately linear nominal decrease while inputs saturate."""
    e_nom = step_run.metrics["e_ee_nom"]
    pre, sat = _saturated_phase(step_run)
    check("step: pre-settle phase exists", pre >= 10, f"{pre} ticks")
    frac = float(np.mean(sat))
    check("step: input at limit >= 50% of pre-settle ticks", frac >= 0.5, f"{frac:.0%}")
    diffs = np.diff(e_nom[: pre + 1])
    check(
        "step: nominal error decrease monotone",
        bool(np.all(diffs < 1e-6)),
        f"max increase {diffs.max():.2e}",
    )
    idx = np.flatnonzero(sat)
    y = e_nom[idx]
    A = np.vstack([idx, np.ones_like(idx)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    r2 = 1.0 - float(res[0]) / float(np.sum((y - y.mean()) ** 2))
    check("step: saturated decrease approximately linear (R2 >= 0.95)", r2 >= 0.95, f"R2 {r2:.4f}")


def test_criterion_step_body_error(step_run):
    """e_body_local steady-state mean <= 1.5 mm.

    Expected red: with the pinned per-component sigma_y = 1 mm the per-disk
    disturbance norm alone averages 1.6 mm and the best possible 12-DOF
    correction leaves ~1.5 mm, measured 1.7 mm with sigma_x = 0 and ~2.1 mm at
    full defaults, independent of controller gains. Kept as stated; the
    blocking analysis lives in the decisions ledger.
    """
    eb = step_run.metrics["e_body_local"]
    pre, _ = _saturated_phase(step_run)
    steady = float(np.mean(eb[pre + 30 :]))
    check("step: e_body_local steady mean <= 1.5 mm", steady <= 1.5, f"{steady:.2f} mm")


# -- criterion 5: hard-constraint guarantee ------------------------------------


def test_criterion_tube_waypoints_and_margins(tube_run):
    s = tube_run.summary
    check(
        "tube: all four waypoints reached",
        s["all_waypoints_reached"],
        f"{len(s['waypoints_reached'])}/4",
    )
    tol = tube_run.config.mpc_params.tol_c
    check(
        "tube: nominal margin > c_d - 1e-6 at every tick",
        bool(np.all(tube_run.metrics["margin_nom_min"] > -tol)),
        f"min nominal margin {s['min_margin_nominal']:.2e} mm",
    )


def test_criterion_exterior_target_margins(exterior_runs):
    mpc_run, _ = exterior_runs
    s = mpc_run.summary
    tol = mpc_run.config.mpc_params.tol_c
    check(
        "exterior: zero nominal violations",
        s["violation_ticks_nominal"] == 0
        and bool(np.all(mpc_run.metrics["margin_nom_min"] > -tol)),
        f"min nominal margin {s['min_margin_nominal']:.2e}",
    )
    c_d = mpc_run.config.mpc_params.c_d
    min_dist = s["min_margin_real"] + c_d
    check("exterior: real min distance stays > 0", min_dist > 0.0, f"{min_dist:.2f} mm")
    overshoot = max(0.0, -s["min_margin_real"])
    check(
        "exterior: disturbance overshoot <= 2.5 mm beyond nominal margin",
        overshoot <= 2.5,
        f"{overshoot:.2f} mm",
    )


# -- criterion 6: MPC vs DLS differential --------------------------------------


def test_criterion_differential_violations(exterior_runs):
    mpc_run, dls_run = exterior_runs
    check(
        "differential: MPC records zero nominal violations",
        mpc_run.summary["violation_ticks_nominal"] == 0,
    )
    dls_viol = dls_run.summary["violation_ticks_real_margin"]
    check(
        "differential: DLS violates d < c_d on >= 1 tick",
        dls_viol >= 1,
        f"{dls_viol} violation ticks, min margin {dls_run.summary['min_margin_real']:.1f} mm",
    )


def test_criterion_differential_settle_times(comparison_runs):
    mpc_run, dls_run = comparison_runs
    sa = mpc_run.summary["settle_tick"]
    sb = dls_run.summary["settle_tick"]
    check("differential: both controllers converge", sa is not None and sb is not None, f"{sa} vs {sb}")
    factor = max(sa, sb) / max(min(sa, sb), 1)
    check(
        "differential: settle times within factor 2",
        factor <= 2.0,
        f"mpc {sa} ticks, dls {sb} ticks, factor {factor:.2f}",
    )


# -- criterion 7: timing (soft) -------------------------------------------------


def test_criterion_timing_report():
    """Solver timing, reported; misses trigger investigation, not failure."""
    cfg = load_config("configs/winding_tube.yaml")
    stats2 = benchmark_solver(cfg, repetitions=150)
    ok2 = stats2["mean_ms"] <= 33.0
    print(
        f"[{'PASS' if ok2 else 'SOFT-FAIL'}] timing: N=2, 350-vertex mesh, "
        f"mean {stats2['mean_ms']:.1f} ms (target <= 33), p95 {stats2['p95_ms']:.1f} ms"
    )
    cfg3 = dataclasses.replace(
        cfg, mpc_params=dataclasses.replace(cfg.mpc_params, horizon=3)
    )
    stats3 = benchmark_solver(cfg3, repetitions=100)
    ok3 = stats3["mean_ms"] <= 100.0
    print(
        f"[{'PASS' if ok3 else 'SOFT-FAIL'}] timing: N=3 with mesh, "
        f"mean {stats3['mean_ms']:.1f} ms (target <= 100)"
    )
    cfg_nomesh = dataclasses.replace(cfg, mesh=None, waypoints=cfg.waypoints)
    stats_nm = benchmark_solver(cfg_nomesh, repetitions=150)
    check(
        "timing: no-mesh run faster than with-mesh at equal horizon",
        stats_nm["mean_ms"] < stats2["mean_ms"],
        f"{stats_nm['mean_ms']:.1f} vs {stats2['mean_ms']:.1f} ms",
    )
    assert stats2["mean_ms"] > 0 and stats3["mean_ms"] > 0


# -- criterion 8: determinism ----------------------------------------------------


def test_criterion_determinism(tmp_path):
    for name, seconds in (("exterior_target", 6.0), ("step_response", 5.0)):
        cfg = dataclasses.replace(load_config(f"configs/{name}.yaml"), duration_s=seconds)
        run_scenario(cfg, out_dir=tmp_path / name / "a")
        run_scenario(cfg, out_dir=tmp_path / name / "b")
        same = (
            (tmp_path / name / "a" / "metrics.csv").read_bytes()
            == (tmp_path / name / "b" / "metrics.csv").read_bytes()
        )
        check(f"determinism: {name} metrics.csv bit-exact", same)


# -- secondary: teleop end-to-end ------------------------------------------------


def test_secondary_teleop_end_to_end():
    """Scripted client: interior target converges, exterior target holds margin."""
    import json

    from fastapi.testclient import TestClient

    from tdcr_mpc.scenario import config_from_dict
    from tdcr_mpc.teleop import create_app

    cfg = config_from_dict(
        {
            "name": "teleop_acceptance",
            "seed": 3,
            "mesh": "halfspace_box",
            "mpc": {"s": 1.0, "c_d": 5.5},
            "local": {"k_ee": 30.0, "k_body": 0.5},
            "disturbance": {
                "sigma_x": 0.035,
                "sigma_y": 0.35,
                "w_x_max": 0.35,
                "w_y_max": 1.5,
            },
        }
    )
    app = create_app(cfg, realtime=False)
    with TestClient(app) as client:
        r = client.post("/target", json={"position": [20.0, 0.0, 190.0]}).json()
        assert r["ok"] and r["inside"]
        with client.websocket_connect("/ws") as ws:
            converged_tick = None
            for _ in range(600):
                m = json.loads(ws.receive_text())
                if m.get("type") != "state" or m.get("e_ee_real") is None:
                    continue
                if m["e_ee_real"] < 2.0:
                    converged_tick = m["tick"]
                    break
            check(
                "teleop: interior target converges within 15 simulated s",
                converged_tick is not None and converged_tick < 450,
                f"tick {converged_tick}",
            )

        r = client.post("/target", json={"position": [120.0, 0.0, 160.0]}).json()
        assert r["ok"] and not r["inside"]
        with client.websocket_connect("/ws") as ws:
            start = None
            min_dist = np.inf
            while True:
                m = json.loads(ws.receive_text())
                if m.get("type") != "state":
                    continue
                if start is None:
                    start = m["tick"]
                if m["min_distance_real"] is not None:
                    min_dist = min(min_dist, m["min_distance_real"])
                if m["tick"] >= start + 300:
                    break
            check(
                "teleop: exterior target keeps min distance >= 0 for 10 s",
                min_dist >= 0.0,
                f"min distance {min_dist:.2f} mm",
            )
