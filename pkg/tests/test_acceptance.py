"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the status lines
are printed even without ``-s``.
"""

import filecmp
import math
import random
import time
from pathlib import Path

import pytest

from athn.capacity import (
    CapacityOptions,
    brute_force_optimum,
    build_problem,
    lower_bound,
    measure_capacity,
    minimize_capacity,
    total_capacity,
)
from athn.instance import GeneratorConfig, Params
from athn.report import Scenario, ablation, format_ablation, labor_cost, plan_from_schedule, run_pipeline, sweep
from athn.routing import earliest_start, objective_value, solve_exact

from helpers import RouteOracle, small_case

ALL_CELLS = [CapacityOptions(b, e) for b in (False, True) for e in (False, True)]


@pytest.fixture
def announce(capsys, request):
    """Print one status line per criterion, whatever the outcome."""
    lines = []

    def say(number, title, detail=""):
        lines.append((number, title, detail))

    yield say
    failed = request.node.rep_call.failed if hasattr(request.node, "rep_call") else True
    with capsys.disabled():
        for number, title, detail in lines:
            status = "FAIL" if failed else "PASS"
            print(f"\n[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))


# -- shared cases ----------------------------------------------------------------------


def _capacity_case(seed):
    r = random.Random(1000 + seed)
    n = r.randint(5, 8)
    params = Params(delta_minutes=r.choice([30, 60, 90, 120]), sigma_minutes=r.choice([30, 45, 60]))
    _, hubs, graph = small_case(seed, n=n, hubs=r.choice([2, 3]), params=params, horizon=r.choice([180, 300]), regions=r.choice([2, 3]))
    plan = earliest_start(solve_exact(graph, r.choice([2, 4, 8])), graph)
    return graph, plan


@pytest.fixture(scope="module")
def capacity_cases():
    cases = []
    seed = 0
    while len(cases) < 30:
        graph, plan = _capacity_case(seed)
        seed += 1
        if plan.routes:
            cases.append((graph, plan))
    return cases


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    """Two independent runs of the desk-scale scenario."""
    runs = []
    for k in range(2):
        scenario = Scenario(
            generator=GeneratorConfig(num_loads=2000),
            seed=1,
            params=Params(num_hubs=50, num_trucks=100),
            engine="heuristic",
            out_dir=str(tmp_path_factory.mktemp(f"desk{k}")),
        )
        t0 = time.monotonic()
        report = run_pipeline(scenario)
        runs.append((report, time.monotonic() - t0))
    return runs


# -- criteria --------------------------------------------------------------------------


def test_c01_route_oracle_equivalence(announce):
    mismatches = []
    t0 = time.monotonic()
    for seed in range(50):
        r = random.Random(seed)
        n, H, K = r.randint(3, 6), r.choice([2, 3]), r.choice([1, 2, 3])
        _, hubs, graph = small_case(seed, n=n, hubs=H)
        exact = solve_exact(graph, K)
        expected, _ = RouteOracle(graph.tasks, hubs, graph.params).optimum(K)
        if exact.objective != expected:
            mismatches.append((seed, exact.objective, expected))
    announce(1, "route solver equals exhaustive enumeration", f"50 instances, {len(mismatches)} mismatches, {time.monotonic() - t0:.1f}s")
    assert not mismatches


def test_c02_capacity_oracle_equivalence(announce, capacity_cases):
    mismatches = []
    reduced = 0
    t0 = time.monotonic()
    for graph, plan in capacity_cases:
        problem = build_problem(plan, graph)
        sol = minimize_capacity(problem)
        oracle = brute_force_optimum(problem)
        reduced += sol.total < total_capacity(measure_capacity(problem.initial, problem))
        if sol.total != oracle.total or not sol.proven_optimal:
            mismatches.append((sol.total, oracle.total))
    announce(2, "capacity solver equals brute-force (time-indexed MILP) optimum", f"30 instances, {reduced} with a reduction, {len(mismatches)} mismatches, {time.monotonic() - t0:.1f}s")
    assert not mismatches


def test_c03_sandwich(announce, capacity_cases, desk_runs):
    violations = []
    for graph, plan in capacity_cases:
        problem = build_problem(plan, graph)
        before = total_capacity(measure_capacity(problem.initial, problem))
        after = minimize_capacity(problem).total
        lb = lower_bound(problem, graph)
        if not lb <= after <= before:
            violations.append((lb, after, before))
    for report, _ in desk_runs:
        if not report.lower_bound <= report.total_after <= report.total_before:
            violations.append((report.lower_bound, report.total_after, report.total_before))
    report = desk_runs[0][0]
    announce(3, "lower bound <= after <= before", f"{len(capacity_cases) + len(desk_runs)} runs; desk scale {report.lower_bound} <= {report.total_after} <= {report.total_before}")
    assert not violations


def test_c04_redundancy_invariance(announce, capacity_cases):
    disagreements = []
    for graph, plan in capacity_cases:
        totals = set()
        for opts in ALL_CELLS:
            problem = build_problem(plan, graph, opts)
            totals.add(minimize_capacity(problem).total)
            totals.add(brute_force_optimum(problem).total)
        if len(totals) != 1:
            disagreements.append(totals)
    announce(4, "bounds and pinning on/off give identical optima", f"{len(capacity_cases)} instances x 4 cells")
    assert not disagreements


def test_c05_cost_invariance(announce, capacity_cases, desk_runs):
    changed = []
    for graph, plan in capacity_cases:
        before = objective_value(plan, graph)
        problem = build_problem(plan, graph)
        sol = minimize_capacity(problem)
        after = objective_value(plan_from_schedule(plan, problem, sol.S), graph)
        if after != before:
            changed.append((before, after))
    for report, _ in desk_runs:
        if report.objective_after != report.objective_before:
            changed.append((report.objective_before, report.objective_after))
    announce(5, "route objective unchanged by capacity optimisation", f"{len(capacity_cases) + len(desk_runs)} runs, exact float equality")
    assert not changed


def test_c06_labor_cost(announce):
    one = labor_cost(1)
    headline = labor_cost(88)
    announce(6, "labor cost arithmetic", f"1 unit ${one:,}, 88 units ${headline:,}")
    assert one == 172_671
    assert abs(headline - 15_200_000) <= 50_000


def test_c07_desk_scale_pipeline(announce, desk_runs):
    report, seconds = desk_runs[0]
    shifts = report.shifts
    delta = report.instance.params.delta_minutes
    largest = max(shifts.load_shifts + shifts.unload_shifts, default=0)
    announce(
        7,
        "2000 loads, 50 hubs, K=100 pipeline",
        f"{seconds:.0f}s; capacity {report.total_before} -> {report.total_after} ({report.reduction_pct:.1f}% reduction), "
        f"lower bound {report.lower_bound}, proven {report.proven_optimal}; "
        f"{100 * shifts.fraction_loads_shifted:.1f}% of loadings shifted, largest shift {largest} min",
    )
    assert seconds <= 30 * 60
    assert report.reduction_pct > 0
    assert largest <= 2 * delta
    assert report.lower_bound <= report.total_after <= report.total_before


def test_c08_delta_monotonicity(announce, tmp_path):
    failures = []
    deltas = [0, 30, 60, 120]
    series = []
    for seed in range(10):
        scenario = Scenario(
            generator=GeneratorConfig(num_loads=8, num_regions=2, region_spread_miles=30.0, horizon_minutes=300, bounding_box_miles=(300.0, 200.0)),
            seed=seed,
            params=Params(num_hubs=2, num_trucks=4, horizon_minutes=300),
            engine="exact",
            out_dir=str(tmp_path / f"s{seed}"),
        )
        rows = sweep(scenario, "delta", deltas, fixed_routes=True)
        totals = [row["total_after"] for row in rows]
        series.append(totals)
        if any(row["error"] for row in rows) or not all(row["proven_optimal"] for row in rows):
            failures.append((seed, rows))
        elif any(b > a for a, b in zip(totals, totals[1:])):
            failures.append((seed, totals))
    announce(8, "optimal totals non-increasing in delta (fixed routes)", "; ".join("/".join(map(str, s)) for s in series))
    assert not failures


def test_c09_determinism(announce, desk_runs):
    (a, _), (b, _) = desk_runs
    names = sorted(p.name for p in Path(a.out_dir).glob("*.csv"))
    _, mismatch, errors = filecmp.cmpfiles(a.out_dir, b.out_dir, names, shallow=False)
    announce(9, "byte-identical CSV output across runs", f"{len(names)} files compared, differing: {mismatch + errors or 'none'}")
    assert names and not mismatch and not errors


def test_c10_ablation(announce, tmp_path):
    scenario = Scenario(
        generator=GeneratorConfig(num_loads=300),
        seed=0,
        params=Params(num_hubs=20),
        out_dir=str(tmp_path),
    )
    rows = ablation(scenario, [10, 20, 30])
    table = format_ablation(rows)
    totals = {}
    for row in rows:
        totals.setdefault(row["trucks"], set()).add(row["total"])
    announce(10, "ablation table, all cells agree", "\n" + table)
    assert all(len(v) == 1 for v in totals.values())
    assert len(rows) == 12
    assert all(math.isclose(r["speedup"], 1.0) for r in rows if r["redundant_bounds"] == "off" and r["eq4"] == "off")
