"""Expansion of routes into job sequences with start-time domains.

Each task on a route becomes LOAD, PARK, DRIVE, PARK, UNLOAD; consecutive
tasks are joined by PARK, RELOCATE, PARK. A route with m tasks therefore has
8m - 3 jobs. Job indices are 1-based. Domains are closed integer intervals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum

from .errors import InfeasibleExpansionError
from .instance import Params
from .task_graph import TaskGraph


class JobType(str, Enum):
    LOAD = "LOAD"
    DRIVE = "DRIVE"
    UNLOAD = "UNLOAD"
    RELOCATE = "RELOCATE"
    PARK = "PARK"


LOAD, DRIVE, UNLOAD, RELOCATE, PARK = JobType.LOAD, JobType.DRIVE, JobType.UNLOAD, JobType.RELOCATE, JobType.PARK
HUB_JOBS = (LOAD, UNLOAD)


@dataclass(frozen=True)
class Job:
    route: int
    index: int
    jtype: JobType
    duration: int | None  # None for PARK (flexible)
    task: int | None = None
    hub: int | None = None
    dom_lo: int | None = None
    dom_hi: int | None = None

    @property
    def flexible(self) -> bool:
        return self.duration is None


@dataclass(frozen=True)
class JobSequence:
    route: int
    tasks: tuple
    jobs: tuple

    def __len__(self):
        return len(self.jobs)

    def job(self, index: int) -> Job:
        return self.jobs[index - 1]

    def hub_jobs(self):
        return [j for j in self.jobs if j.jtype in HUB_JOBS]


def expand_route(route, graph: TaskGraph, route_id: int = 0) -> JobSequence:
    """Build the job pattern for one route (a list of task ids)."""
    if not route:
        raise InfeasibleExpansionError(f"route {route_id} is empty")
    sigma = graph.params.sigma_minutes
    jobs = []

    def add(jtype, duration, task=None, hub=None):
        jobs.append(Job(route_id, len(jobs) + 1, jtype, duration, task, hub))

    for i, t in enumerate(route):
        v = graph.vertex(t)
        task = graph.task_at(v)
        if i:
            prev = graph.task_at(graph.vertex(route[i - 1]))
            reloc = int(graph.reloc_minutes[graph.vertex(route[i - 1]) - 1, v - 1])
            add(PARK, None, hub=prev.dest_hub)
            add(RELOCATE, reloc)
            add(PARK, None, hub=task.origin_hub)
        add(LOAD, sigma, t, task.origin_hub)
        add(PARK, None, hub=task.origin_hub)
        add(DRIVE, int(graph.drive[v - 1]), t)
        add(PARK, None, hub=task.dest_hub)
        add(UNLOAD, sigma, t, task.dest_hub)
    return JobSequence(route_id, tuple(route), tuple(jobs))


def default_horizon(sequences, params: Params) -> tuple[int, int]:
    """Outer limits used for unbounded PARK/RELOCATE domains."""
    lo, hi = 0, params.horizon_minutes
    for seq in sequences:
        for j in seq.jobs:
            if j.jtype is LOAD and j.dom_lo is not None:
                lo = min(lo, j.dom_lo)
            if j.jtype is UNLOAD and j.dom_hi is not None:
                hi = max(hi, j.dom_hi + j.duration)
    return lo, hi


def compute_domains(
    seq: JobSequence,
    graph: TaskGraph,
    use_redundant_bounds: bool = True,
    horizon: tuple[int, int] | None = None,
) -> JobSequence:
    """Attach start-time domains to every job.

    LOAD windows come from the pickup window and are translated to the
    task's DRIVE and UNLOAD. RELOCATE and PARK get the derived bounds when
    ``use_redundant_bounds`` is set, otherwise the outer horizon.
    """
    delta = graph.params.delta_minutes
    jobs = list(seq.jobs)
    lo = [None] * len(jobs)
    hi = [None] * len(jobs)
    for k, j in enumerate(jobs):
        if j.jtype is LOAD:
            p = graph.task_at(graph.vertex(j.task)).pickup_time
            lo[k], hi[k] = p - delta, p + delta
        elif j.jtype in (DRIVE, UNLOAD):
            src = jobs[k - 2]
            lo[k], hi[k] = lo[k - 2] + src.duration, hi[k - 2] + src.duration
    if horizon is None:
        tmp = [replace(j, dom_lo=lo[k], dom_hi=hi[k]) for k, j in enumerate(jobs)]
        horizon = default_horizon([JobSequence(seq.route, seq.tasks, tuple(tmp))], graph.params)
    for k, j in enumerate(jobs):
        if j.jtype is RELOCATE:
            if use_redundant_bounds:
                lo[k] = lo[k - 2] + jobs[k - 2].duration
                hi[k] = hi[k + 2] - j.duration
            else:
                lo[k], hi[k] = horizon
    for k, j in enumerate(jobs):
        if j.jtype is PARK:
            if use_redundant_bounds:
                lo[k] = lo[k - 1] + jobs[k - 1].duration
                hi[k] = hi[k + 1]
            else:
                lo[k], hi[k] = horizon
    out = []
    for k, j in enumerate(jobs):
        if lo[k] > hi[k]:
            raise InfeasibleExpansionError(
                f"route {seq.route}: job {j.index} ({j.jtype.value}) has empty domain [{lo[k]}, {hi[k]}]"
            )
        out.append(replace(j, dom_lo=lo[k], dom_hi=hi[k]))
    return JobSequence(seq.route, seq.tasks, tuple(out))


def expand_plan(plan, graph: TaskGraph, use_redundant_bounds: bool = True) -> list[JobSequence]:
    """Expand and attach domains for every route of a plan, sharing one horizon."""
    raw = [expand_route(r, graph, k) for k, r in enumerate(plan.routes)]
    with_windows = [compute_domains(s, graph, True) for s in raw]
    horizon = default_horizon(with_windows, graph.params)
    return [compute_domains(s, graph, use_redundant_bounds, horizon) for s in raw]


def initial_schedule(seq: JobSequence, start_times: dict) -> list[int]:
    """Job start times for the routing schedule; last entry is the end sentinel.

    Each LOAD starts at its task's start time and every later job of the task
    follows without waiting; PARK jobs before a LOAD absorb the slack.
    """
    S = []
    t = None
    for k, j in enumerate(seq.jobs):
        if j.jtype is LOAD:
            t = start_times[j.task]
        S.append(t)
        if j.duration is not None:
            t += j.duration
    S.append(t)
    return S


def write_jobs_csv(sequences, before, after, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["route", "index", "type", "task", "hub", "duration", "dom_lo", "dom_hi", "start_before", "start_after"])
        for seq, sb, sa in zip(sequences, before, after):
            for k, j in enumerate(seq.jobs):
                w.writerow([
                    seq.route, j.index, j.jtype.value,
                    "" if j.task is None else j.task,
                    "" if j.hub is None else j.hub,
                    "" if j.duration is None else j.duration,
                    j.dom_lo, j.dom_hi, sb[k], sa[k],
                ])
