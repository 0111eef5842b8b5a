"""Pipeline orchestration, sweeps, ablation and labor-cost accounting.

Monetary figures are computed here only; the solvers work in miles and
minutes. Every artifact is a plain CSV with a one-line header.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from .capacity import (
    CapacityOptions,
    build_problem,
    measure_capacity,
    minimize_capacity,
    shift_report,
    single_task_relaxation,
    total_capacity,
    write_capacity_csv,
    write_solution_csv,
)
from .errors import ConfigurationError, ConsistencyError, StageError
from .instance import GeneratorConfig, Instance, Params, generate_synthetic, read_instance, write_instance
from .jobs import LOAD, write_jobs_csv
from .network import build_tasks, kmeans_hubs, write_hubs_csv
from .routing import earliest_start, objective_value, solve_exact, solve_heuristic, verify_plan, write_plan_csv
from .task_graph import build_graph, write_graph_csv

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "ATHN_OUTPUT_ROOT"
HIST_BIN_MINUTES = 10


@dataclass(frozen=True)
class LaborModel:
    annual_wage_per_shift: int = 57_557
    shifts_per_day: int = 3

    def __post_init__(self):
        if self.annual_wage_per_shift <= 0 or self.shifts_per_day <= 0:
            raise ConfigurationError("wage and shifts per day must be positive")


def labor_cost(capacity_units: int, model: LaborModel = LaborModel()) -> int:
    """Yearly cost of staffing the given number of loading/unloading slots around the clock."""
    if capacity_units < 0:
        raise ConfigurationError(f"capacity_units must be >= 0, got {capacity_units}")
    return capacity_units * model.shifts_per_day * model.annual_wage_per_shift


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "athn_out"))


@dataclass
class Scenario:
    instance_path: str | None = None
    generator: GeneratorConfig | None = None
    seed: int = 0
    params: Params = field(default_factory=Params)
    engine: str = "heuristic"
    options: CapacityOptions = field(default_factory=CapacityOptions)
    out_dir: str | None = None
    route_time_limit: float = 3 * 3600.0
    capacity_time_limit: float = 1800.0
    capacity_node_limit: int | None = None
    compute_lower_bound: bool = True

    def validate(self):
        if (self.instance_path is None) == (self.generator is None):
            raise ConfigurationError("a scenario needs exactly one of an instance path or a generator config")
        if self.engine not in ("exact", "heuristic"):
            raise ConfigurationError(f"unknown route engine {self.engine!r}")
        self.params.validate()

    def output_dir(self) -> Path:
        return Path(self.out_dir) if self.out_dir is not None else default_output_root()


@dataclass
class RunReport:
    out_dir: Path
    instance: Instance
    hubs: list
    graph: object
    plan: object
    problem: object
    solution: object
    before: dict
    after: dict
    lower_bound: int | None
    lower_by_hub: dict | None
    objective_before: float
    objective_after: float
    shifts: object
    timings: dict

    @property
    def total_before(self) -> int:
        return total_capacity(self.before)

    @property
    def total_after(self) -> int:
        return total_capacity(self.after)

    @property
    def reduction_pct(self) -> float | None:
        if self.total_before <= 0:
            return None
        return 100.0 * (self.total_before - self.total_after) / self.total_before

    @property
    def proven_optimal(self) -> bool:
        """Closed search, or the relaxation bound meets the incumbent."""
        return self.solution.proven_optimal or (self.lower_bound is not None and self.lower_bound >= self.total_after)

    @property
    def best_bound(self) -> int:
        return max(self.solution.bound, self.lower_bound or 0)

    @property
    def loads_autonomous(self) -> int:
        return len(self.plan.covered)


class _Stage:
    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, kind, exc, tb):
        self.timings[self.name] = time.monotonic() - self.t0
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_instance(scenario: Scenario) -> Instance:
    if scenario.instance_path is not None:
        inst = read_instance(scenario.instance_path)
        return inst.with_params(scenario.params)
    return generate_synthetic(scenario.generator, scenario.seed, scenario.params)


def run_pipeline(scenario: Scenario, instance: Instance | None = None, plan=None) -> RunReport:
    """Run every stage and write its artifact to the scenario's output directory.

    A precomputed ``plan`` skips route solving (fixed-routes mode); its task
    order is kept and start times are recomputed for the scenario's params.
    """
    scenario.validate()
    out = scenario.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    p = scenario.params

    with _Stage("instance", timings):
        inst = instance if instance is not None else load_instance(scenario)
        inst = inst.with_params(p)
        write_instance(inst, out / "instance.json")
    with _Stage("hubs", timings):
        hubs = kmeans_hubs(inst, p.num_hubs, seed=scenario.seed)
        write_hubs_csv(hubs, out / "hubs.csv")
    with _Stage("tasks", timings):
        tasks = build_tasks(inst, hubs)
    with _Stage("graph", timings):
        graph = build_graph(tasks, hubs, p)
        write_graph_csv(graph, out / "graph.csv")
    with _Stage("routes", timings):
        if plan is None:
            if scenario.engine == "exact":
                plan = solve_exact(graph, p.num_trucks, time_limit=scenario.route_time_limit)
            else:
                plan = solve_heuristic(graph, p.num_trucks)
        else:
            plan = replace(plan, objective=None)
        plan = earliest_start(plan, graph)
        plan = replace(plan, objective=objective_value(replace(plan, objective=None), graph))
        verify_plan(plan, graph, p.num_trucks)
        write_plan_csv(plan, out / "routes.csv")
    with _Stage("schedule", timings):
        problem = build_problem(plan, graph, scenario.options)
        before = measure_capacity(problem.initial, problem)
    with _Stage("capacity", timings):
        sol = minimize_capacity(problem, time_limit=scenario.capacity_time_limit, node_limit=scenario.capacity_node_limit)
        after = measure_capacity(sol.S, problem)
        objective_after = objective_value(plan_from_schedule(plan, problem, sol.S), graph)
        if objective_after != plan.objective:
            raise ConsistencyError(f"route objective changed from {plan.objective!r} to {objective_after!r}")
        write_jobs_csv(problem.sequences, problem.initial, sol.S, out / "jobs.csv")
        write_solution_csv(problem, problem.initial, sol.S, out / "solution.csv")
    lb, lb_hub = None, None
    with _Stage("lowerbound", timings):
        if scenario.compute_lower_bound:
            relaxed = single_task_relaxation(problem, graph)
            lsol = minimize_capacity(relaxed, time_limit=scenario.capacity_time_limit, node_limit=scenario.capacity_node_limit)
            lb = lsol.total if lsol.proven_optimal else lsol.bound
            lb_hub = lsol.C
        write_capacity_csv(problem.hubs, before, after, lb_hub, out / "capacity.csv")
    shifts = shift_report(problem.initial, sol.S, problem)
    report = RunReport(out, inst, hubs, graph, plan, problem, sol, before, after, lb, lb_hub, plan.objective, objective_after, shifts, timings)
    with _Stage("report", timings):
        emit_plot_data(report)
        write_summary(report)
    return report


def plan_from_schedule(plan, problem, S):
    """Route plan whose start times are the LOAD starts of S; raises if a route changed."""
    starts = {}
    for seq, s in zip(problem.sequences, S):
        for k, j in enumerate(seq.jobs):
            if j.jtype is LOAD:
                starts[j.task] = s[k]
    routes = [list(seq.tasks) for seq in problem.sequences]
    if routes != [list(r) for r in plan.routes]:
        raise ConsistencyError("capacity optimisation changed a route")
    return replace(plan, start_times=starts, objective=None)


def summary_dict(report: RunReport) -> dict:
    return {
        "loads": len(report.instance.loads),
        "hubs": len(report.hubs),
        "trucks": report.instance.params.num_trucks,
        "loads_autonomous": report.loads_autonomous,
        "routes": len(report.plan.routes),
        "route_objective_miles": report.objective_before,
        "route_gap": report.plan.optimality_gap,
        "total_before": report.total_before,
        "total_after": report.total_after,
        "lower_bound": report.lower_bound,
        "reduction_pct": report.reduction_pct,
        "proven_optimal": report.proven_optimal,
        "capacity_bound": report.best_bound,
        "labor_cost_before": labor_cost(report.total_before),
        "labor_cost_after": labor_cost(report.total_after),
        "labor_savings": labor_cost(report.total_before - report.total_after),
        "loads_shifted": report.shifts.loads_shifted,
        "fraction_loads_shifted": report.shifts.fraction_loads_shifted,
        "max_shift_min": max(report.shifts.load_shifts + report.shifts.unload_shifts, default=0),
    }


def write_summary(report: RunReport) -> None:
    """summary.csv (deterministic) and timings.json (wall clock, not compared)."""
    d = summary_dict(report)
    with open(report.out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in d.items():
            w.writerow([k, repr(v) if isinstance(v, float) else v])
    with open(report.out_dir / "timings.json", "w") as fh:
        json.dump(report.timings, fh, indent=1, sort_keys=True)


def format_summary(report: RunReport) -> str:
    d = summary_dict(report)
    red = "n/a" if d["reduction_pct"] is None else f"{d['reduction_pct']:.1f}%"
    lines = [
        f"loads {d['loads']}, hubs {d['hubs']}, trucks {d['trucks']}: {d['loads_autonomous']} loads on {d['routes']} autonomous routes",
        f"route objective {d['route_objective_miles']:.3f} miles (gap {d['route_gap']:.4f})",
        f"capacity before {d['total_before']}, after {d['total_after']}, lower bound {d['lower_bound']}, reduction {red}"
        + ("" if d["proven_optimal"] else f" (not proven; bound {d['capacity_bound']})"),
        f"labor cost ${d['labor_cost_before']:,} -> ${d['labor_cost_after']:,} per year (saves ${d['labor_savings']:,})",
        f"loads rescheduled {d['loads_shifted']} ({100 * d['fraction_loads_shifted']:.1f}%), largest shift {d['max_shift_min']} min",
    ]
    return "\n".join(lines)


def _histogram(values, width=HIST_BIN_MINUTES):
    counts = {}
    for v in values:
        if v:
            b = (v - 1) // width  # bin b covers shifts in (b*width, (b+1)*width]
            counts[b] = counts.get(b, 0) + 1
    top = max(counts, default=-1)
    return [(b * width, (b + 1) * width, counts.get(b, 0)) for b in range(top + 1)]


def emit_plot_data(report: RunReport) -> None:
    out = report.out_dir
    with open(out / "capacity_map.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub_id", "x", "y", "cap_before", "cap_after"])
        for h in sorted(report.hubs, key=lambda h: h.id):
            w.writerow([h.id, repr(h.location.x), repr(h.location.y), report.before.get(h.id, 0), report.after.get(h.id, 0)])
    for name, values in (("load", report.shifts.load_shifts), ("unload", report.shifts.unload_shifts)):
        with open(out / f"shift_hist_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["shift_from_min", "shift_to_min", "count"])
            w.writerows(_histogram(values))


# -- sweeps ------------------------------------------------------------------------

SWEEP_AXES = {"sigma": "sigma_minutes", "delta": "delta_minutes", "K": "num_trucks"}
SWEEP_HEADER = ["axis_value", "total_before", "total_after", "lower_bound", "reduction_pct", "cp_seconds", "loads_autonomous", "proven_optimal", "error"]


def sweep(scenario: Scenario, axis: str, values, fixed_routes: bool = False, out_name: str | None = None) -> list[dict]:
    """One pipeline run per value; failures are recorded and the sweep continues.

    With ``fixed_routes`` the routes are solved once, at the smallest value,
    and reused at every point so only domains and durations change.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; expected one of {sorted(SWEEP_AXES)}")
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    if fixed_routes and axis != "delta":
        raise ConfigurationError("fixed-routes mode only applies to the delta axis")
    root = scenario.output_dir()
    root.mkdir(parents=True, exist_ok=True)
    instance = load_instance(scenario)
    field_name = SWEEP_AXES[axis]
    base_plan = None
    if fixed_routes:
        p0 = replace(scenario.params, **{field_name: min(values)})
        hubs = kmeans_hubs(instance, p0.num_hubs, seed=scenario.seed)
        g0 = build_graph(build_tasks(instance.with_params(p0), hubs), hubs, p0)
        base_plan = solve_exact(g0, p0.num_trucks, scenario.route_time_limit) if scenario.engine == "exact" else solve_heuristic(g0, p0.num_trucks)
    rows = []
    for v in values:
        row = {"axis_value": v}
        try:
            point = replace(scenario, params=replace(scenario.params, **{field_name: v}), out_dir=str(root / f"{axis}_{v}"))
            rep = run_pipeline(point, instance=instance, plan=base_plan)
            row.update(
                total_before=rep.total_before,
                total_after=rep.total_after,
                lower_bound=rep.lower_bound,
                reduction_pct=rep.reduction_pct,
                cp_seconds=rep.timings.get("capacity"),
                loads_autonomous=rep.loads_autonomous,
                proven_optimal=rep.proven_optimal,
                error="",
            )
        except Exception as exc:  # noqa: BLE001 - recorded per point
            log.warning("sweep point %s=%s failed: %s", axis, v, exc)
            row.update({k: None for k in SWEEP_HEADER[1:-1]}, error=str(exc))
        rows.append(row)
    path = root / (out_name or f"sweep_{axis}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow(["" if r.get(k) is None else (f"{r[k]:.3f}" if k in ("reduction_pct", "cp_seconds") else r[k]) for k in SWEEP_HEADER])
    return rows


# -- ablation ------------------------------------------------------------------------

ABLATION_CELLS = [
    ("off", "off", CapacityOptions(False, False)),
    ("on", "off", CapacityOptions(True, False)),
    ("off", "on", CapacityOptions(False, True)),
    ("on", "on", CapacityOptions(True, True)),
]


def ablation(scenario: Scenario, truck_counts, repeats: int = 1) -> list[dict]:
    """Solve the capacity problem under all four option combinations per truck count.

    Reports wall-time and node ratios against the (off, off) cell and raises
    ConsistencyError if the cells disagree on the optimum.
    """
    scenario.validate()
    root = scenario.output_dir()
    root.mkdir(parents=True, exist_ok=True)
    instance = load_instance(scenario).with_params(scenario.params)
    hubs = kmeans_hubs(instance, scenario.params.num_hubs, seed=scenario.seed)
    tasks = build_tasks(instance, hubs)
    rows = []
    for K in truck_counts:
        p = replace(scenario.params, num_trucks=K)
        graph = build_graph(tasks, hubs, p)
        plan = solve_exact(graph, K, scenario.route_time_limit) if scenario.engine == "exact" else solve_heuristic(graph, K)
        plan = earliest_start(plan, graph)
        base = None
        for bounds, eq4, opts in ABLATION_CELLS:
            problem = build_problem(plan, graph, opts)
            best = None
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                sol = minimize_capacity(problem, time_limit=scenario.capacity_time_limit, node_limit=scenario.capacity_node_limit)
                dt = time.perf_counter() - t0
                best = dt if best is None else min(best, dt)
            row = {"trucks": K, "redundant_bounds": bounds, "eq4": eq4, "total": sol.total, "proven_optimal": sol.proven_optimal, "nodes": sol.nodes, "seconds": best}
            if base is None:
                base = row
            if sol.total != base["total"]:
                raise ConsistencyError(f"K={K}: optimum {sol.total} with bounds={bounds}, eq4={eq4} differs from {base['total']}")
            row["speedup"] = base["seconds"] / best if best > 0 else math.inf
            row["node_ratio"] = base["nodes"] / sol.nodes if sol.nodes else 1.0
            rows.append(row)
    with open(root / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["trucks", "redundant_bounds", "eq4", "total", "proven_optimal", "nodes", "seconds", "speedup", "node_ratio"]
        w.writerow(header)
        for r in rows:
            w.writerow([f"{r[k]:.4f}" if k in ("seconds", "speedup", "node_ratio") else r[k] for k in header])
    return rows


def format_ablation(rows) -> str:
    counts = sorted({r["trucks"] for r in rows})
    lines = ["bounds eq4  " + "  ".join(f"K={k:>4}" for k in counts)]
    for bounds, eq4, _ in ABLATION_CELLS:
        cells = []
        for k in counts:
            r = next(r for r in rows if r["trucks"] == k and r["redundant_bounds"] == bounds and r["eq4"] == eq4)
            cells.append(f"{r['speedup']:5.1f}x")
        lines.append(f"{bounds:<6} {eq4:<4} " + "  ".join(cells))
    return "\n".join(lines)
