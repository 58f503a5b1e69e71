"""Command-line entry points: run, compare, bench and serve."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .harness import benchmark_solver, run_comparison, run_scenario
from .scenario import load_config


def _apply_overrides(cfg, args):
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "controller", None) is not None:
        updates["controller"] = args.controller
    if getattr(args, "rate", None) is not None:
        updates["control_rate_hz"] = args.rate
    return dataclasses.replace(cfg, **updates) if updates else cfg


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_scenario(cfg, out_dir=args.out)
    s = result.summary
    print(f"scenario '{s['name']}' ({s['controller']}): {s['n_ticks']} ticks")
    print(
        f"  waypoints reached: {len(s['waypoints_reached'])}/{s['waypoints_total']}"
        f"  final e_ee_real: {s['final_e_ee_real']:.2f} mm"
    )
    if s["min_margin_real"] is not None:
        print(
            f"  min margin real/nominal: {s['min_margin_real']:.2f} / "
            f"{s['min_margin_nominal']:.2f} mm"
        )
    print(f"  solve: mean {s['solve_ms']['mean']:.1f} ms, p95 {s['solve_ms']['p95']:.1f} ms")
    if args.out:
        print(f"  artifacts in {args.out}")
    return 0


def cmd_compare(args) -> int:
    base = load_config(args.config)
    cfg_a = _apply_overrides(dataclasses.replace(base, controller="mpc"), args)
    cfg_b = dataclasses.replace(cfg_a, controller="dls")
    report = run_comparison(cfg_a, cfg_b, out_dir=args.out, seed=cfg_a.seed)
    report.pop("_runs", None)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    stats = benchmark_solver(cfg, repetitions=args.reps)
    print(json.dumps(stats, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.json", "w") as f:
            json.dump(stats, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .teleop import create_app

    cfg = _apply_overrides(load_config(args.config), args)
    app = create_app(cfg, realtime=True)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdcr-mpc", description="TDCR safe-zone MPC toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario YAML file")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--rate", type=float, default=None, help="control rate override (Hz)")

    run_p = sub.add_parser("run", parents=[common], help="run one closed-loop scenario")
    run_p.add_argument("--out", default=None, help="output directory for metrics/summary")
    run_p.add_argument("--controller", choices=["mpc", "dls"], default=None)
    run_p.set_defaults(fn=cmd_run)

    cmp_p = sub.add_parser(
        "compare", parents=[common], help="run MPC vs DLS on identical disturbances"
    )
    cmp_p.add_argument("--out", default=None)
    cmp_p.set_defaults(fn=cmd_compare)

    bench_p = sub.add_parser("bench", parents=[common], help="benchmark per-tick solve time")
    bench_p.add_argument("--reps", type=int, default=200, help="number of control ticks")
    bench_p.add_argument("--out", default=None)
    bench_p.add_argument("--controller", choices=["mpc", "dls"], default=None)
    bench_p.set_defaults(fn=cmd_bench)

    serve_p = sub.add_parser("serve", parents=[common], help="start the teleoperation service")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8720)
    serve_p.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
