"""Task graph: direct costs, arc transit times and arc cost differentials.

Vertex 0 is the source, vertices 1..n are the tasks in list order and
vertex n+1 is the sink. Arc data is held in dense (n+2)x(n+2) matrices;
``feasible`` marks which arcs exist.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .instance import Params, minutes_for_miles
from .network import Hub, Task


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    tau: int
    cost_diff: float


def direct_cost(task: Task) -> float:
    """Conventional service: delivery plus empty return."""
    return 2.0 * math.hypot(task.origin.x - task.destination.x, task.origin.y - task.destination.y)


def _hub_dist(a: Hub, b: Hub) -> float:
    return math.hypot(a.location.x - b.location.x, a.location.y - b.location.y)


def first_last_miles(task: Task, hubs_by_id) -> float:
    hp = hubs_by_id[task.origin_hub].location
    hm = hubs_by_id[task.dest_hub].location
    return math.hypot(task.origin.x - hp.x, task.origin.y - hp.y) + math.hypot(hm.x - task.destination.x, hm.y - task.destination.y)


def autonomous_service_cost(task: Task, hubs, alpha: float, beta: float) -> float:
    """Miles charged when the load rides the hub network.

    Loaded first/last miles are inflated by 1/(1-beta) for empty repositioning;
    the hub-to-hub leg is discounted by alpha.
    """
    by_id = _by_id(hubs)
    middle = _hub_dist(by_id[task.origin_hub], by_id[task.dest_hub])
    return first_last_miles(task, by_id) / (1.0 - beta) + alpha * middle


def _by_id(hubs):
    return hubs if isinstance(hubs, dict) else {h.id: h for h in hubs}


@dataclass
class TaskGraph:
    tasks: list
    hubs: list
    params: Params
    direct: np.ndarray  # d_t, per task
    service: np.ndarray  # autonomous service cost, per task
    drive: np.ndarray  # hub-to-hub minutes, per task
    tau: np.ndarray  # int64 (n+2, n+2)
    cost: np.ndarray  # float64 (n+2, n+2)
    feasible: np.ndarray  # bool (n+2, n+2)
    reloc_minutes: np.ndarray  # int64 (n, n): minutes from h-_t to h+_t'
    reloc_miles: np.ndarray  # float64 (n, n)

    @property
    def n(self) -> int:
        return len(self.tasks)

    @property
    def source(self) -> int:
        return 0

    @property
    def sink(self) -> int:
        return len(self.tasks) + 1

    def vertex(self, task_id: int) -> int:
        return self._index[task_id] + 1

    def task_at(self, vertex: int) -> Task:
        return self.tasks[vertex - 1]

    def __post_init__(self):
        self._index = {t.id: i for i, t in enumerate(self.tasks)}

    @property
    def windows(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.array([t.pickup_time for t in self.tasks], dtype=np.int64)
        return p - self.params.delta_minutes, p + self.params.delta_minutes

    def arcs(self) -> Iterator[Arc]:
        tails, heads = np.nonzero(self.feasible)
        for u, v in zip(tails.tolist(), heads.tolist()):
            yield Arc(u, v, int(self.tau[u, v]), float(self.cost[u, v]))

    def arc_count(self) -> int:
        return int(self.feasible.sum())

    def total_direct(self) -> float:
        return math.fsum(self.direct.tolist())


def build_graph(tasks: list[Task], hubs: list[Hub], params: Params) -> TaskGraph:
    n = len(tasks)
    by_id = _by_id(hubs)
    alpha, beta = params.alpha, params.beta
    sigma, delta = params.sigma_minutes, params.delta_minutes

    hub_ids = sorted(by_id)
    pos = {h: i for i, h in enumerate(hub_ids)}
    H = len(hub_ids)
    hub_miles = np.array([[_hub_dist(by_id[a], by_id[b]) for b in hub_ids] for a in hub_ids]).reshape(H, H)
    hub_minutes = np.array(
        [[minutes_for_miles(hub_miles[i, j], params.speed_mph) for j in range(H)] for i in range(H)], dtype=np.int64
    ).reshape(H, H)

    hp = np.array([pos[t.origin_hub] for t in tasks], dtype=np.int64)
    hm = np.array([pos[t.dest_hub] for t in tasks], dtype=np.int64)
    direct = np.array([direct_cost(t) for t in tasks], dtype=float)
    service = np.array([first_last_miles(t, by_id) / (1.0 - beta) + alpha * hub_miles[hp[i], hm[i]] for i, t in enumerate(tasks)], dtype=float)
    drive = hub_minutes[hp, hm] if n else np.zeros(0, dtype=np.int64)
    p = np.array([t.pickup_time for t in tasks], dtype=np.int64)

    reloc_miles = hub_miles[hm[:, None], hp[None, :]] if n else np.zeros((0, 0))
    reloc_minutes = hub_minutes[hm[:, None], hp[None, :]] if n else np.zeros((0, 0), dtype=np.int64)

    size = n + 2
    tau = np.zeros((size, size), dtype=np.int64)
    cost = np.zeros((size, size), dtype=float)
    feasible = np.zeros((size, size), dtype=bool)
    if n:
        inner = slice(1, n + 1)
        tau[inner, inner] = (sigma + drive + sigma)[:, None] + reloc_minutes
        cost[inner, inner] = (service[:, None] + alpha * reloc_miles) - direct[:, None]
        # window pruning: t' cannot start in time after t
        ok = (p[None, :] + delta) >= (p[:, None] - delta) + tau[inner, inner]
        np.fill_diagonal(ok, False)
        feasible[inner, inner] = ok
        tau[inner, n + 1] = sigma + drive + sigma
        cost[inner, n + 1] = service - direct
        feasible[0, inner] = True
        feasible[inner, n + 1] = True
    return TaskGraph(list(tasks), list(hubs), params, direct, service, drive, tau, cost, feasible, reloc_minutes, reloc_miles)


def write_graph_csv(graph: TaskGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "tau_min", "cost_diff_miles"])
        for a in graph.arcs():
            w.writerow([a.tail, a.head, a.tau, repr(a.cost_diff)])
