"""Batch command-line pipeline: gen -> build -> solve -> evaluate.

Every command reads and writes plain files so stages are independently
testable and resumable, funnels all randomness through an explicit --seed,
and drops a <output>.manifest.json recording the resolved parameters so a
run can be reproduced exactly.

Exit codes: 0 success, 1 infeasible model, 2 bad input, 3 resource limit
(a limit was hit before any feasible solution existed).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, bnb, cardinality, evaluate, kernels, rowgen, scp
from . import city as city_mod
from . import trajectory as traj
from .errors import BuscoverError, InfeasibleError

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_BAD_INPUT = 2
EXIT_RESOURCE_LIMIT = 3


def _out_dir() -> Path:
    return Path(os.environ.get("BUSCOVER_OUTPUT_DIR", "."))


def _write_manifest(command: str, args: argparse.Namespace, inputs, outputs,
                    started: float, anchor_path) -> None:
    manifest = {
        "command": command,
        "argv": [f"--{k.replace('_', '-')}={v}" for k, v in sorted(vars(args).items())
                 if k != "func" and v is not None],
        "parameters": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "kernel_backend": kernels.backend_name(),
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    path = Path(str(anchor_path) + ".manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = text.lower().split("x")
        return int(rows), int(cols)
    except Exception:
        raise ValueError(f"--streets-grid expects ROWSxCOLS, got {text!r}") from None


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# --- gen ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    started = time.time()
    rows, cols = _parse_grid(args.streets_grid)
    active_start, active_end = args.active_start, args.active_end
    inputs = []
    if args.active_from_csv:
        series = city_mod.read_change_series(args.active_from_csv)
        active_start, active_end = city_mod.detect_active_period(
            series, args.activity_threshold)
        inputs.append(args.active_from_csv)
    network = city_mod.generate_grid_city(rows, cols, args.street_length, args.seed)
    routes = city_mod.generate_routes(network, args.routes, args.route_length,
                                      args.seed + 1)
    trips = city_mod.expand_trips(routes, args.trips_per_route, args.headway,
                                  args.first_departure, args.speed)
    scenario = city_mod.CityScenario(network, routes, trips,
                                     float(active_start), float(active_end),
                                     float(args.T))
    out = Path(args.output) if args.output else _out_dir() / "scenario.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    city_mod.save_scenario(scenario, out)
    print(f"scenario: {len(network.streets)} streets, {len(routes)} routes, "
          f"{len(trips)} trips, active {active_start:g}-{active_end:g} min, "
          f"T={args.T:g} -> {out}")
    _write_manifest("gen", args, inputs, [out], started, out)
    return EXIT_OK


# --- build --------------------------------------------------------------------

def cmd_build(args) -> int:
    started = time.time()
    scenario = city_mod.load_scenario(args.scenario)
    grid = traj.build_time_grid(scenario.active_start, scenario.active_end,
                                scenario.refresh_min)
    coverage = traj.build_coverage(scenario, grid)
    if args.coverage_csv:
        traj.write_coverage_csv(coverage, args.coverage_csv)
    instance = scp.assemble_instance(coverage, grid, scenario.trips)
    out = Path(args.output) if args.output else _out_dir() / "instance.scm"
    out.parent.mkdir(parents=True, exist_ok=True)
    scp.save_instance(instance, out)
    stats = scp.matrix_stats(instance)
    print(f"stats: {stats.m} rows x {stats.n} cols, nnz={stats.nnz}, "
          f"density={stats.density:.3%}, avg_nnz_per_row={stats.avg_nnz_per_row:.2f}, "
          f"pruned_cols={len(instance.pruned_trips)}")
    outputs = [out, Path(str(out) + ".meta.csv")]
    if args.coverage_csv:
        outputs.append(Path(args.coverage_csv))
    _write_manifest("build", args, [args.scenario], outputs, started, out)
    return EXIT_OK


# --- solve --------------------------------------------------------------------

def _solution_payload(instance, result, elapsed, stcb_result=None) -> dict:
    best = result.best
    payload = {
        "status": result.status,
        "objective": best.objective if best else None,
        "lower_bound": result.lower_bound if result.lower_bound != float("inf") else "inf",
        "nodes_explored": result.nodes_explored,
        "elapsed_s": round(elapsed, 6),
        "columns": sorted(best.chosen) if best else [],
        "trip_ids": sorted(instance.col_meta[j] for j in best.chosen) if best else [],
        "stcb": None,
    }
    if stcb_result is not None:
        pre = stcb_result.pretrain
        payload["stcb"] = {
            "fallback": stcb_result.fallback,
            "fallback_reason": stcb_result.fallback_reason,
            "mode": stcb_result.cuts.mode,
            "slack": stcb_result.cuts.slack,
            "xi_plus": stcb_result.cuts.upper.rhs,
            "xi_minus": stcb_result.cuts.lower.rhs,
            "cluster_sizes": [len(c) for c in stcb_result.partition.clusters],
            "pretrain": {
                "iterations": pre.iterations,
                "sub_rows": len(pre.sub_rows),
                "sub_objective": pre.x_star_sub.objective,
                "violated_remaining": pre.violated_remaining,
                "degraded": pre.degraded,
            },
            "stage_seconds": {k: round(v, 6) for k, v in stcb_result.stage_seconds.items()},
        }
    return payload


def cmd_solve(args) -> int:
    started = time.time()
    instance = scp.load_instance(args.instance)
    if args.threads > 1:
        print("note: node exploration is single-threaded; --threads affects "
              "evaluation only", file=sys.stderr)
    config = bnb.SolveConfig(time_limit=args.time_limit, gap_tolerance=args.gap,
                             node_limit=args.node_limit, seed=args.seed,
                             log_every=args.log_every, root_lp=not args.no_root_lp)
    out = Path(args.output) if args.output else _out_dir() / "solution.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    outputs = [out]
    stcb_result = None
    t0 = time.monotonic()
    if args.stcb:
        sub_cfg = bnb.SolveConfig(time_limit=args.pretrain_time_limit, seed=args.seed,
                                  root_lp=not args.no_root_lp)
        rg_cfg = rowgen.RowGenConfig(batch_size=args.beta, row_cap=args.row_cap,
                                     max_iterations=args.max_iters,
                                     sub_solve_config=sub_cfg)
        stcb_result = cardinality.solve_stcb(instance, rg_cfg, k=args.k,
                                             mode=args.cut_mode, slack=args.slack,
                                             solve_config=config)
        result = stcb_result.solve
        log = stcb_result.pipeline_log()
        if args.cuts_out:
            cardinality.write_cuts_json(stcb_result.cuts, args.cuts_out)
            outputs.append(Path(args.cuts_out))
        if args.partition_out:
            cardinality.write_partition_csv(stcb_result.partition, args.partition_out)
            outputs.append(Path(args.partition_out))
        if args.trace_out:
            rowgen.write_pretrain_trace(stcb_result.pretrain, args.trace_out)
            outputs.append(Path(args.trace_out))
    else:
        result = bnb.solve(instance, (), config)
        log = result.log
    elapsed = time.monotonic() - t0

    log_path = Path(args.log) if args.log else Path(str(out) + ".log.csv")
    bnb.write_incumbent_csv(log, log_path)
    outputs.append(log_path)
    with open(out, "w") as fh:
        json.dump(_solution_payload(instance, result, elapsed, stcb_result), fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    summary = (f"status={result.status} "
               f"objective={result.best.objective if result.best else 'none'} "
               f"lower_bound={result.lower_bound:.6g} nodes={result.nodes_explored} "
               f"elapsed_s={elapsed:.3f} backend={kernels.backend_name()}")
    if stcb_result is not None:
        summary += f" stcb_fallback={stcb_result.fallback}"
    print(summary)
    _write_manifest("solve", args, [args.instance], outputs, started, out)
    if result.status == bnb.STATUS_INFEASIBLE:
        return EXIT_INFEASIBLE
    if result.best is None:
        return EXIT_RESOURCE_LIMIT
    return EXIT_OK


# --- evaluate -----------------------------------------------------------------

def _plan_from_solution(path) -> evaluate.AllocationPlan:
    with open(path) as fh:
        payload = json.load(fh)
    if not payload.get("trip_ids"):
        raise ValueError(f"{path}: solution has no trips to evaluate")
    provenance = "stcb" if payload.get("stcb") else (
        "optimal" if payload.get("status") == "optimal" else "incumbent")
    return evaluate.AllocationPlan(frozenset(payload["trip_ids"]), provenance)


def cmd_evaluate(args) -> int:
    started = time.time()
    out_dir = Path(args.output) if args.output else _out_dir() / "evaluation"
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs: list = []
    outputs: list = []
    did_anything = False

    if args.scenario and args.solution:
        scenario = city_mod.load_scenario(args.scenario)
        plan = _plan_from_solution(args.solution)
        inputs += [args.scenario, args.solution]
        sizes = _parse_int_list(args.random_sizes) if args.random_sizes else []
        report = evaluate.compare_plans(scenario, plan, sizes, args.trials,
                                        args.window, args.seed, threads=args.threads)
        report_path = out_dir / "undetected.csv"
        evaluate.write_report_csv(report, report_path)
        outputs.append(report_path)
        opt_score = report.plans[0]
        print(f"plan '{opt_score.label}' size={opt_score.size} "
              f"mean_undetected={opt_score.mean:.3f} per {args.window:g}-min window")
        for size in sizes:
            print(f"random size={size}: mean_undetected={report.random_mean(size):.3f}")
        if args.plot:
            fig_path = out_dir / "undetected.svg"
            evaluate.plot_undetected(report, fig_path)
            outputs.append(fig_path)
        did_anything = True

    if args.benchmark_log and args.stcb_log:
        bench = bnb.read_incumbent_csv(args.benchmark_log)
        stcb = bnb.read_incumbent_csv(args.stcb_log)
        inputs += [args.benchmark_log, args.stcb_log]
        if args.targets:
            targets = _parse_int_list(args.targets)
        else:
            objectives = sorted({obj for _, obj in bench.entries}
                                | {obj for _, obj in stcb.entries}, reverse=True)
            targets = objectives[:: max(1, len(objectives) // 5)][:5]
        rows = evaluate.speedup_table(bench, stcb, targets)
        limit = args.log_limit
        if limit is None:
            limit = max([t for t, _ in bench.entries + stcb.entries] or [0.0])
        speedup_path = out_dir / "speedup.csv"
        evaluate.write_speedup_csv(rows, speedup_path, benchmark_limit=limit,
                                   stcb_limit=limit)
        outputs.append(speedup_path)
        for row in rows:
            pct = f"{row.percent:.2f}%" if row.percent is not None else "/"
            print(f"objective {row.objective}: benchmark "
                  f"{evaluate.format_time_cell(row.benchmark_s, limit)}s, stcb "
                  f"{evaluate.format_time_cell(row.stcb_s, limit)}s, speedup {pct}")
        if args.plot:
            fig_path = out_dir / "incumbents.svg"
            evaluate.plot_incumbents({"benchmark": bench, "stcb": stcb}, fig_path)
            outputs.append(fig_path)
        did_anything = True

    if not did_anything:
        raise ValueError("evaluate needs a scenario+solution pair, or "
                         "--benchmark-log with --stcb-log, or both")
    _write_manifest("evaluate", args, inputs, outputs, started, out_dir / "evaluation")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buscover",
        description="Minimum-sensor bus trip selection for street parking coverage.")
    parser.add_argument("--version", action="version", version=f"buscover {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic city scenario file")
    gen.add_argument("--streets-grid", default="15x15", help="grid size ROWSxCOLS")
    gen.add_argument("--street-length", type=float, default=500.0, help="meters per street")
    gen.add_argument("--routes", type=int, default=400)
    gen.add_argument("--route-length", type=int, default=120, help="streets per route")
    gen.add_argument("--trips-per-route", type=int, default=12)
    gen.add_argument("--headway", type=float, default=60.0,
                     help="minutes between successive departures of a route")
    gen.add_argument("--first-departure", type=float, default=360.0,
                     help="minutes from midnight of the earliest trip")
    gen.add_argument("--speed", type=float, default=30.0, help="cruising speed km/h")
    gen.add_argument("--T", type=float, default=30.0, dest="T",
                     help="target refresh period in minutes")
    gen.add_argument("--active-start", type=float, default=360.0)
    gen.add_argument("--active-end", type=float, default=1140.0)
    gen.add_argument("--active-from-csv", default=None,
                     help="derive the active period from a parking-change CSV")
    gen.add_argument("--activity-threshold", type=float, default=0.25)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", default=None)
    gen.set_defaults(func=cmd_gen)

    build = sub.add_parser("build", help="build the covering instance from a scenario")
    build.add_argument("scenario")
    build.add_argument("--coverage-csv", default=None,
                       help="also export coverage memberships as CSV")
    build.add_argument("-o", "--output", default=None)
    build.set_defaults(func=cmd_build)

    solve = sub.add_parser("solve", help="solve an instance (plain or with --stcb)")
    solve.add_argument("instance")
    solve.add_argument("--stcb", action="store_true",
                       help="run the self-trained cardinality-branching pipeline")
    solve.add_argument("--time-limit", type=float, default=60.0)
    solve.add_argument("--node-limit", type=int, default=None)
    solve.add_argument("--gap", type=float, default=0.0)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--threads", type=int, default=1)
    solve.add_argument("--log-every", type=float, default=5.0)
    solve.add_argument("--no-root-lp", action="store_true",
                       help="skip the root LP relaxation")
    solve.add_argument("--k", type=int, default=2, help="branch cluster count")
    solve.add_argument("--cut-mode", choices=["warmstart", "literal"],
                       default="warmstart")
    solve.add_argument("--slack", type=int, default=None)
    solve.add_argument("--beta", type=int, default=50, help="rows added per pretrain round")
    solve.add_argument("--row-cap", type=int, default=None)
    solve.add_argument("--max-iters", type=int, default=8)
    solve.add_argument("--pretrain-time-limit", type=float, default=10.0,
                       help="time limit per pretrain sub-solve")
    solve.add_argument("--log", default=None, help="incumbent log CSV path")
    solve.add_argument("--cuts-out", default=None)
    solve.add_argument("--partition-out", default=None)
    solve.add_argument("--trace-out", default=None)
    solve.add_argument("-o", "--output", default=None)
    solve.set_defaults(func=cmd_solve)

    ev = sub.add_parser("evaluate",
                        help="score plans against random baselines / build speedup tables")
    ev.add_argument("scenario", nargs="?", default=None)
    ev.add_argument("solution", nargs="?", default=None)
    ev.add_argument("--random-sizes", default=None, help="comma-separated plan sizes")
    ev.add_argument("--trials", type=int, default=10)
    ev.add_argument("--window", type=float, default=30.0, help="window width, minutes")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--threads", type=int, default=1)
    ev.add_argument("--benchmark-log", default=None)
    ev.add_argument("--stcb-log", default=None)
    ev.add_argument("--targets", default=None, help="comma-separated objectives")
    ev.add_argument("--log-limit", type=float, default=None,
                    help="time-limit value used for '>limit' cells")
    ev.add_argument("--plot", action="store_true", help="emit SVG charts")
    ev.add_argument("-o", "--output", default=None, help="output directory")
    ev.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.pairs:
            print(f"uncoverable (street, interval) pairs: {list(exc.pairs)[:50]}",
                  file=sys.stderr)
        return EXIT_INFEASIBLE
    except (BuscoverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
