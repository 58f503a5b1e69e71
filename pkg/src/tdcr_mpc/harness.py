"""Closed-loop scenario runner, comparison reports and solver benchmarks.

Each control tick executes measure -> controller -> plant step and appends one
row to metrics.csv. All logged quantities except wall-clock solve times are
deterministic functions of (config, seed); timings go to a separate file so a
rerun reproduces metrics.csv byte for byte.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dls import dls_step
from .geometry import STATE_DIM
from .local_control import local_control
from .mesh_sdf import SafeZone, signed_distance_batch
from .mpc import MpcSolution, initialize, solve
from .plant import Plant
from .scenario import ScenarioConfig, WaypointSpec

_U_COLS = [f"u_nom_{k}" for k in range(STATE_DIM)] + [
    f"u_loc_{k}" for k in range(STATE_DIM)
] + [f"u_{k}" for k in range(STATE_DIM)]

METRIC_COLUMNS = [
    "tick",
    "t",
    "wp_index",
    "target_x",
    "target_y",
    "target_z",
    "e_ee_real",
    "e_ee_nom",
    "e_ee_local",
    "e_body_local",
    "u_nom_norm",
    "u_loc_norm",
    "u_norm",
    "margin_real_min",
    "margin_nom_min",
    "solver_status",
    "solver_iters",
    "solver_active",
    "clamp_count",
] + _U_COLS


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: dict                 # column name -> np.ndarray / list
    summary: dict
    out_dir: Path | None = None
    measured_shapes: np.ndarray | None = None
    nominal_shapes: np.ndarray | None = None
    plant_log: dict | None = None  # true state and held disturbances per tick


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def settle_tick(errors: np.ndarray, tol: float, window: int = 15) -> int | None:
    """First tick from which every trailing `window`-mean stays below tol."""
    e = np.asarray(errors, dtype=float)
    if len(e) < window:
        return None
    means = np.convolve(e, np.ones(window) / window, mode="valid")
    bad = np.flatnonzero(means >= tol)
    if len(bad) == 0:
        return window - 1
    if bad[-1] == len(means) - 1:
        return None
    return int(bad[-1] + 1 + window - 1)


def run_scenario(
    config: ScenarioConfig,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    controller: str | None = None,
) -> RunResult:
    """Execute one closed-loop run and (optionally) write its artifacts."""
    seed = config.seed if seed is None else seed
    controller = config.controller or "mpc" if controller is None else controller
    geom = config.geometry
    zone = config.load_zone()
    dt = config.dt
    n_ticks = config.n_ticks
    x_init = config.initial_state()

    plant = Plant(geom, config.disturbance, initial_state=x_init.copy(), seed=seed)
    y = plant.measure()

    x_nom = x_init.copy()
    sol: MpcSolution | None = None
    wp_idx = 0
    consec = 0
    reached: list[dict] = []
    rows = {c: [] for c in METRIC_COLUMNS}
    solve_ms: list[float] = []
    clamp_seen = 0
    measured_hist = [] if config.dump_shapes else None
    nominal_hist = [] if config.dump_shapes else None
    state_hist = [] if config.dump_shapes else None
    w_x_hist = [] if config.dump_shapes else None
    w_y_hist = [] if config.dump_shapes else None

    for tick in range(n_ticks):
        t = tick * dt
        target = np.array(config.waypoints[wp_idx].position) if config.waypoints else None

        t0 = time.perf_counter()
        if controller == "mpc":
            solution = solve(x_nom, target, zone, config.mpc_params, geom, warm_start=sol)
            sol = solution
            u_nom = solution.inputs[0]
            nominal_shape = solution.outputs[0]
            measured_for_local = y[-1] if config.ee_only_feedback else y
            u_loc = local_control(nominal_shape, measured_for_local, x_nom, config.local_gains, geom)
            u = u_nom + u_loc
            status, iters, n_active = solution.status, solution.iterations, solution.n_active
        else:
            res = dls_step(y, plant.x.copy(), target, zone, config.dls_params, geom)
            u_nom = res.u
            u_loc = np.zeros(STATE_DIM)
            u = res.u
            nominal_shape = y
            status, iters, n_active = ("clamped" if res.clamped else "ok"), 0, 0
        solve_ms.append((time.perf_counter() - t0) * 1e3)

        # metrics for this tick
        ee_real = y[-1]
        e_ee_real = float(np.linalg.norm(ee_real - target)) if target is not None else 0.0
        if controller == "mpc":
            e_ee_nom = (
                float(np.linalg.norm(nominal_shape[-1] - target)) if target is not None else 0.0
            )
            e_ee_local = float(np.linalg.norm(nominal_shape[-1] - ee_real))
            e_body_local = float(
                np.mean(np.linalg.norm(nominal_shape[:-1] - y[:-1], axis=1))
            )
        else:
            e_ee_nom = e_ee_real
            e_ee_local = 0.0
            e_body_local = 0.0
        if zone is not None:
            d_real, _, _ = signed_distance_batch(zone, y)
            margin_real = float(d_real.min() - config.mpc_params.c_d)
            d_nom, _, _ = signed_distance_batch(zone, nominal_shape)
            margin_nom = float(d_nom.min() - config.mpc_params.c_d)
        else:
            margin_real = margin_nom = float("inf")

        new_clamps = len(plant.clamp_events) - clamp_seen
        clamp_seen = len(plant.clamp_events)

        vals = {
            "tick": tick,
            "t": t,
            "wp_index": wp_idx if config.waypoints else -1,
            "target_x": target[0] if target is not None else float("nan"),
            "target_y": target[1] if target is not None else float("nan"),
            "target_z": target[2] if target is not None else float("nan"),
            "e_ee_real": e_ee_real,
            "e_ee_nom": e_ee_nom,
            "e_ee_local": e_ee_local,
            "e_body_local": e_body_local,
            "u_nom_norm": float(np.linalg.norm(u_nom)),
            "u_loc_norm": float(np.linalg.norm(u_loc)),
            "u_norm": float(np.linalg.norm(u)),
            "margin_real_min": margin_real,
            "margin_nom_min": margin_nom,
            "solver_status": status,
            "solver_iters": iters,
            "solver_active": n_active,
            "clamp_count": new_clamps,
        }
        for k in range(STATE_DIM):
            vals[f"u_nom_{k}"] = float(u_nom[k])
            vals[f"u_loc_{k}"] = float(u_loc[k])
            vals[f"u_{k}"] = float(u[k])
        for c in METRIC_COLUMNS:
            rows[c].append(vals[c])
        if config.dump_shapes:
            measured_hist.append(y.copy())
            nominal_hist.append(nominal_shape.copy())
            state_hist.append(plant.x.copy())
            w_x_hist.append(plant.w_x.copy())
            w_y_hist.append(plant.w_y.copy())

        # waypoint bookkeeping: advance only after the full dwell
        if config.waypoints and len(reached) < len(config.waypoints):
            wp = config.waypoints[wp_idx]
            if e_ee_real < wp.tolerance:
                consec += 1
            else:
                consec = 0
            if consec >= wp.dwell_ticks:
                reached.append({"index": wp_idx, "tick": tick, "t": t})
                if wp_idx < len(config.waypoints) - 1:
                    wp_idx += 1
                    consec = 0

        # advance the nominal system and the plant
        if controller == "mpc":
            x_nom = initialize(sol, geom)
        y = plant.step(u, dt)

    metrics = {c: np.asarray(v) for c, v in rows.items()}
    summary = _summarize(config, controller, seed, metrics, reached, solve_ms, plant)
    result = RunResult(config=config, metrics=metrics, summary=summary)
    if config.dump_shapes:
        result.measured_shapes = np.array(measured_hist)
        result.nominal_shapes = np.array(nominal_hist)
        result.plant_log = {
            "state": np.array(state_hist),
            "w_x": np.array(w_x_hist),
            "w_y": np.array(w_y_hist),
        }
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        _write_artifacts(result, solve_ms)
    return result


def _summarize(config, controller, seed, metrics, reached, solve_ms, plant) -> dict:
    e_real = metrics["e_ee_real"]
    tol = config.waypoints[-1].tolerance if config.waypoints else 2.0
    margins_real = metrics["margin_real_min"]
    margins_nom = metrics["margin_nom_min"]
    finite_real = margins_real[np.isfinite(margins_real)]
    finite_nom = margins_nom[np.isfinite(margins_nom)]
    tail = slice(max(0, len(e_real) - 150), None)
    return {
        "name": config.name,
        "controller": controller,
        "seed": seed,
        "n_ticks": int(len(e_real)),
        "control_rate_hz": config.control_rate_hz,
        "waypoints_total": len(config.waypoints),
        "waypoints_reached": reached,
        "all_waypoints_reached": len({r["index"] for r in reached}) == len(config.waypoints),
        "settle_tick": settle_tick(e_real, tol),
        "final_e_ee_real": float(e_real[-1]),
        "tail_mean_e_ee_real": float(np.mean(e_real[tail])),
        "tail_mean_e_body_local": float(np.mean(metrics["e_body_local"][tail])),
        "violation_ticks_real_margin": int(np.sum(finite_real < 0.0)),
        "violation_ticks_real_surface": int(
            np.sum(finite_real < -config.mpc_params.c_d)
        ),
        "violation_ticks_nominal": int(np.sum(finite_nom < -config.mpc_params.tol_c)),
        "min_margin_real": float(finite_real.min()) if len(finite_real) else None,
        "min_margin_nominal": float(finite_nom.min()) if len(finite_nom) else None,
        "plant_clamp_events": len(plant.clamp_events),
        "solver_status_counts": {
            s: int(n)
            for s, n in zip(*np.unique(np.asarray(metrics["solver_status"]), return_counts=True))
        },
        "solve_ms": {
            "mean": float(np.mean(solve_ms)),
            "p95": float(np.percentile(solve_ms, 95)),
            "max": float(np.max(solve_ms)),
            "note": "wall-clock, excluded from determinism guarantees",
        },
    }


def _write_artifacts(result: RunResult, solve_ms):
    out = result.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        n = len(result.metrics["tick"])
        for i in range(n):
            w.writerow([_fmt(result.metrics[c][i]) for c in METRIC_COLUMNS])
    with open(out / "summary.json", "w") as f:
        json.dump(result.summary, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "timings.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tick", "solve_ms"])
        for i, ms in enumerate(solve_ms):
            w.writerow([i, f"{ms:.3f}"])
    if result.measured_shapes is not None:
        np.savez_compressed(
            out / "shapes.npz",
            measured=result.measured_shapes,
            nominal=result.nominal_shapes,
            state=result.plant_log["state"],
            w_x=result.plant_log["w_x"],
            w_y=result.plant_log["w_y"],
        )


def run_comparison(
    config_a: ScenarioConfig,
    config_b: ScenarioConfig,
    out_dir: str | Path | None = None,
    seed: int | None = None,
) -> dict:
    """Run two controllers on identical disturbance realizations and report."""
    seed = config_a.seed if seed is None else seed
    res_a = run_scenario(config_a, None if out_dir is None else Path(out_dir) / "a", seed=seed)
    res_b = run_scenario(config_b, None if out_dir is None else Path(out_dir) / "b", seed=seed)

    def side(res):
        return {
            "name": res.summary["name"],
            "controller": res.summary["controller"],
            "settle_tick": res.summary["settle_tick"],
            "final_e_ee_real": res.summary["final_e_ee_real"],
            "tail_mean_e_ee_real": res.summary["tail_mean_e_ee_real"],
            "violation_ticks_real_margin": res.summary["violation_ticks_real_margin"],
            "violation_ticks_nominal": res.summary["violation_ticks_nominal"],
            "min_margin_real": res.summary["min_margin_real"],
            "solve_ms_mean": res.summary["solve_ms"]["mean"],
        }

    report = {"seed": seed, "a": side(res_a), "b": side(res_b)}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.json", "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    report["_runs"] = (res_a, res_b)
    return report


def benchmark_solver(config: ScenarioConfig, repetitions: int = 200, seed: int | None = None) -> dict:
    """Wall-clock statistics of the per-tick controller computation."""
    cfg_ticks = max(1, repetitions)
    import dataclasses

    cfg = dataclasses.replace(config, duration_s=cfg_ticks / config.control_rate_hz)
    res = run_scenario(cfg, out_dir=None, seed=seed)
    s = res.summary["solve_ms"]
    return {
        "n": cfg_ticks,
        "mean_ms": s["mean"],
        "p95_ms": s["p95"],
        "max_ms": s["max"],
        "mesh": config.mesh,
        "horizon": config.mpc_params.horizon,
    }
