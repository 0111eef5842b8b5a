"""Command-line front end."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .capacity import (
    CapacityOptions,
    build_problem,
    measure_capacity,
    minimize_capacity,
    single_task_relaxation,
    total_capacity,
    write_capacity_csv,
    write_solution_csv,
)
from .errors import ATHNError, StageError
from .instance import GeneratorConfig, Params, generate_synthetic, read_instance, write_instance
from .jobs import expand_plan, initial_schedule, write_jobs_csv
from .network import build_tasks, kmeans_hubs, read_hubs_csv, write_hubs_csv
from .report import Scenario, ablation, default_output_root, format_ablation, format_summary, run_pipeline, sweep
from .routing import RoutePlan, earliest_start, plan_summary, solve_exact, solve_heuristic, write_plan_csv
from .task_graph import build_graph, write_graph_csv

log = logging.getLogger("athn")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser, instance_required=False):
    p.add_argument("--instance", required=instance_required, help="instance JSON (default: generate one)")
    p.add_argument("--loads", type=int, default=2000, help="loads to generate when no instance is given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta-min", type=int)
    p.add_argument("--sigma-min", type=int)
    p.add_argument("--trucks", type=int)
    p.add_argument("--hubs", type=int)
    p.add_argument("--engine", choices=["exact", "heuristic"], default="heuristic")
    p.add_argument("--time-limit-sec", type=float, default=1800.0, help="capacity search time limit")
    p.add_argument("--route-time-limit-sec", type=float, default=3 * 3600.0)
    p.add_argument("--node-limit", type=int, help="deterministic cap on capacity search nodes")
    p.add_argument("--no-redundant-bounds", action="store_true")
    p.add_argument("--no-eq4", action="store_true", help="do not pin relocations to the end of unloading")
    p.add_argument("--out", help="output directory (default: $ATHN_OUTPUT_ROOT or ./athn_out)")


def _overrides(args):
    return dict(
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        delta_minutes=args.delta_min,
        sigma_minutes=args.sigma_min,
        num_trucks=args.trucks,
        num_hubs=args.hubs,
    )


def scenario_from_args(args) -> Scenario:
    if args.instance:
        params = read_instance(args.instance).params.with_overrides(**_overrides(args))
        source = dict(instance_path=args.instance)
    else:
        params = Params().with_overrides(**_overrides(args))
        source = dict(generator=GeneratorConfig(num_loads=args.loads, horizon_minutes=params.horizon_minutes))
    return Scenario(
        seed=args.seed,
        params=params,
        engine=args.engine,
        options=CapacityOptions(not args.no_redundant_bounds, not args.no_eq4),
        out_dir=args.out,
        route_time_limit=args.route_time_limit_sec,
        capacity_time_limit=args.time_limit_sec,
        capacity_node_limit=args.node_limit,
        **source,
    )


def _out(args) -> Path:
    out = Path(args.out) if args.out else default_output_root()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _instance(scenario):
    if scenario.instance_path:
        return read_instance(scenario.instance_path).with_params(scenario.params)
    return generate_synthetic(scenario.generator, scenario.seed, scenario.params)


def _staged(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _graph(args, scenario, out):
    inst = _staged("instance", _instance, scenario)
    if getattr(args, "hubs_csv", None):
        hubs = _staged("hubs", read_hubs_csv, args.hubs_csv)
    else:
        hubs = _staged("hubs", kmeans_hubs, inst, scenario.params.num_hubs, scenario.seed)
    tasks = _staged("tasks", build_tasks, inst, hubs)
    graph = _staged("graph", build_graph, tasks, hubs, scenario.params)
    return inst, hubs, graph


def _routes(args, scenario, graph):
    K = scenario.params.num_trucks
    if scenario.engine == "exact":
        plan = _staged("routes", solve_exact, graph, K, scenario.route_time_limit)
    else:
        plan = _staged("routes", solve_heuristic, graph, K)
    return _staged("routes", earliest_start, plan, graph)


def cmd_generate(args):
    scenario = scenario_from_args(args)
    inst = _staged("instance", _instance, scenario)
    out = _out(args)
    write_instance(inst, out / "instance.json")
    print(f"wrote {len(inst.loads)} loads to {out / 'instance.json'}")


def cmd_hubs(args):
    scenario = scenario_from_args(args)
    out = _out(args)
    inst, hubs, graph = _graph(args, scenario, out)
    write_hubs_csv(hubs, out / "hubs.csv")
    write_graph_csv(graph, out / "graph.csv")
    print(f"{len(hubs)} hubs, {graph.n} tasks, {graph.arc_count()} arcs -> {out}")


def cmd_routes(args):
    scenario = scenario_from_args(args)
    out = _out(args)
    _, hubs, graph = _graph(args, scenario, out)
    plan = _routes(args, scenario, graph)
    write_hubs_csv(hubs, out / "hubs.csv")
    write_plan_csv(plan, out / "routes.csv")
    print(plan_summary(plan))


def _plan_or_solve(args, scenario, graph):
    if getattr(args, "routes_csv", None):
        import csv

        routes = {}
        with open(args.routes_csv, newline="") as fh:
            for r in csv.DictReader(fh):
                routes.setdefault(int(r["route_id"]), []).append((int(r["seq"]), int(r["task_id"])))
        plan = RoutePlan([[t for _, t in sorted(v)] for _, v in sorted(routes.items())])
        return _staged("routes", earliest_start, plan, graph)
    return _routes(args, scenario, graph)


def cmd_schedule(args):
    scenario = scenario_from_args(args)
    out = _out(args)
    _, _, graph = _graph(args, scenario, out)
    plan = _plan_or_solve(args, scenario, graph)
    seqs = _staged("schedule", expand_plan, plan, graph, scenario.options.use_redundant_bounds)
    S = [initial_schedule(s, plan.start_times) for s in seqs]
    write_jobs_csv(seqs, S, S, out / "jobs.csv")
    print(f"{sum(len(s.jobs) for s in seqs)} jobs on {len(seqs)} routes -> {out / 'jobs.csv'}")


def cmd_capacity(args):
    scenario = scenario_from_args(args)
    out = _out(args)
    _, _, graph = _graph(args, scenario, out)
    plan = _plan_or_solve(args, scenario, graph)
    problem = _staged("schedule", build_problem, plan, graph, scenario.options)
    before = measure_capacity(problem.initial, problem)
    sol = _staged("capacity", minimize_capacity, problem, scenario.capacity_time_limit, scenario.capacity_node_limit)
    write_solution_csv(problem, problem.initial, sol.S, out / "solution.csv")
    write_capacity_csv(problem.hubs, before, sol.C, None, out / "capacity.csv")
    status = "optimal" if sol.proven_optimal else f"not proven, bound {sol.bound}"
    print(f"capacity before {total_capacity(before)}, after {sol.total} ({status})")


def cmd_lowerbound(args):
    scenario = scenario_from_args(args)
    out = _out(args)
    _, _, graph = _graph(args, scenario, out)
    plan = _plan_or_solve(args, scenario, graph)
    problem = _staged("schedule", build_problem, plan, graph, scenario.options)
    relaxed = single_task_relaxation(problem, graph)
    sol = _staged("lowerbound", minimize_capacity, relaxed, scenario.capacity_time_limit, scenario.capacity_node_limit)
    lb = sol.total if sol.proven_optimal else sol.bound
    print(f"lower bound {lb}")


def cmd_run(args):
    report = run_pipeline(scenario_from_args(args))
    print(format_summary(report))
    print(f"outputs in {report.out_dir}")


def cmd_sweep(args):
    scenario = scenario_from_args(args)
    rows = sweep(scenario, args.axis, _int_list(args.values), fixed_routes=args.fixed_routes)
    for r in rows:
        print(json.dumps(r))


def cmd_ablation(args):
    scenario = scenario_from_args(args)
    rows = ablation(scenario, _int_list(args.truck_counts), repeats=args.repeats)
    print(format_ablation(rows))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="athn", description="Autonomous truck hub network planning")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in [
        ("generate", cmd_generate, "write a synthetic instance"),
        ("hubs", cmd_hubs, "place hubs and build the task graph"),
        ("routes", cmd_routes, "solve the routing stage"),
        ("schedule", cmd_schedule, "expand routes into job schedules"),
        ("capacity", cmd_capacity, "minimise hub capacities for fixed routes"),
        ("lowerbound", cmd_lowerbound, "relaxation lower bound on total capacity"),
        ("run", cmd_run, "full pipeline"),
        ("sweep", cmd_sweep, "sensitivity sweep over sigma, delta or K"),
        ("ablation", cmd_ablation, "capacity search with and without redundant bounds/pinning"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(func=fn)
        if name in ("schedule", "capacity", "lowerbound"):
            p.add_argument("--routes-csv", help="reuse routes from a routes.csv")
        if name in ("routes", "schedule", "capacity", "lowerbound"):
            p.add_argument("--hubs-csv", help="reuse hubs from a hubs.csv")
        if name == "sweep":
            p.add_argument("--axis", choices=["sigma", "delta", "K"], required=True)
            p.add_argument("--values", required=True, help="comma-separated values")
            p.add_argument("--fixed-routes", action="store_true", help="solve routes once and reuse them (delta axis)")
        if name == "ablation":
            p.add_argument("--truck-counts", default="10,20,30")
            p.add_argument("--repeats", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 2
    except ATHNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
