"""Autonomous truck routing over the task graph.

A plan is a set of at most K disjoint, time-feasible task chains. Tasks left
off every chain are served directly. The objective is the total direct cost
plus the cost differential of every arc used (source arcs cost nothing).
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError
from .task_graph import TaskGraph

log = logging.getLogger(__name__)

EPS = 1e-9
_BIG = 10**12


@dataclass
class RoutePlan:
    routes: list  # ordered task ids per vehicle
    start_times: dict = field(default_factory=dict)  # task id -> minute
    objective: float | None = None
    optimality_gap: float = 0.0
    nodes: int = 0

    @property
    def covered(self) -> list:
        return [t for r in self.routes for t in r]

    def vehicles_used(self) -> int:
        return len(self.routes)


def _route_terms(graph: TaskGraph, vertices):
    terms = []
    prev = graph.source
    for v in vertices:
        if not graph.feasible[prev, v]:
            raise ConsistencyError(f"arc ({prev}, {v}) is not in the task graph")
        terms.append(float(graph.cost[prev, v]))
        prev = v
    terms.append(float(graph.cost[prev, graph.sink]))
    return terms


def objective_value(plan: RoutePlan, graph: TaskGraph) -> float:
    """Recompute total direct cost plus used-arc differentials from scratch.

    Raises ConsistencyError when the plan carries a different objective.
    """
    terms = graph.direct.tolist()
    for route in plan.routes:
        terms.extend(_route_terms(graph, [graph.vertex(t) for t in route]))
    value = math.fsum(terms)
    if plan.objective is not None and plan.objective != value:
        raise ConsistencyError(f"stored objective {plan.objective!r} != recomputed {value!r}")
    return value


def earliest_start(plan: RoutePlan, graph: TaskGraph) -> RoutePlan:
    """Shift every task to its earliest feasible start along its route."""
    lo, hi = graph.windows
    starts = {}
    for route in plan.routes:
        prev_v, prev_x = None, None
        for t in route:
            v = graph.vertex(t)
            x = int(lo[v - 1])
            if prev_v is not None:
                x = max(x, prev_x + int(graph.tau[prev_v, v]))
            if x > hi[v - 1]:
                raise ConsistencyError(f"route {route} is time-infeasible at task {t}")
            starts[t] = x
            prev_v, prev_x = v, x
    return RoutePlan([list(r) for r in plan.routes], starts, plan.objective, plan.optimality_gap, plan.nodes)


def verify_plan(plan: RoutePlan, graph: TaskGraph, K: int) -> None:
    """Raise ConsistencyError unless the plan satisfies every routing constraint."""
    if len(plan.routes) > K:
        raise ConsistencyError(f"{len(plan.routes)} routes exceed K={K}")
    seen = set()
    for route in plan.routes:
        if not route:
            raise ConsistencyError("empty route")
        for t in route:
            if t in seen:
                raise ConsistencyError(f"task {t} is covered twice")
            seen.add(t)
    lo, hi = graph.windows
    for route in plan.routes:
        for i, t in enumerate(route):
            v = graph.vertex(t)
            x = plan.start_times[t]
            if not lo[v - 1] <= x <= hi[v - 1]:
                raise ConsistencyError(f"task {t} starts at {x}, outside its window")
            if i:
                u = graph.vertex(route[i - 1])
                if x < plan.start_times[route[i - 1]] + graph.tau[u, v]:
                    raise ConsistencyError(f"tasks {route[i-1]}->{t} violate transit time")
    objective_value(plan, graph)


def _finish(graph, vertex_routes, nodes=0, gap=0.0) -> RoutePlan:
    routes = [[graph.task_at(v).id for v in r] for r in vertex_routes]
    plan = RoutePlan(routes, nodes=nodes, optimality_gap=gap)
    plan.objective = objective_value(plan, graph)
    return earliest_start(plan, graph)


# -- exact search ------------------------------------------------------------


class _Timeout(Exception):
    pass


def solve_exact(graph: TaskGraph, K: int, time_limit: float = 3 * 3600.0) -> RoutePlan:
    """Depth-first branch-and-bound over route construction.

    Routes are built one at a time, each opened with a task id larger than
    the previous route's first task. The bound adds, for every task not yet
    placed, the most negative differential it could still contribute.
    """
    n = graph.n
    if n == 0 or K <= 0:
        return _finish(graph, [])
    lo, hi = (w.tolist() for w in graph.windows)
    lo = [0] + lo
    hi = [0] + hi
    C = graph.cost.tolist()
    T = graph.tau.tolist()
    F = graph.feasible.tolist()
    sink = n + 1
    succ = [[w for w in range(1, n + 2) if F[v][w]] if v else [] for v in range(n + 1)]
    minout = [0.0] + [min(C[v][w] for w in succ[v]) for v in range(1, n + 1)]
    neg = [min(0.0, m) for m in minout]

    deadline = time.monotonic() + time_limit
    best = {"cost": 0.0, "routes": []}
    stats = {"nodes": 0, "timed_out": False}
    covered = [False] * (n + 2)

    def tick():
        stats["nodes"] += 1
        if stats["nodes"] & 1023 == 0 and time.monotonic() > deadline:
            raise _Timeout

    def open_route(min_first, done, cost, rest_neg):
        tick()
        if cost < best["cost"] - EPS:
            best["cost"] = cost
            best["routes"] = [list(r) for r in done]
        if len(done) >= K or cost + rest_neg >= best["cost"] - EPS:
            return
        for f in range(min_first + 1, n + 1):
            if covered[f]:
                continue
            covered[f] = True
            extend([f], f, lo[f], f, done, cost, rest_neg - neg[f])
            covered[f] = False

    def extend(route, tail, e_tail, first, done, cost, rest_neg):
        tick()
        if cost + minout[tail] + rest_neg >= best["cost"] - EPS:
            return
        options = []
        for w in succ[tail]:
            if w == sink:
                options.append((C[tail][w], w, 0))
            elif not covered[w]:
                e = max(lo[w], e_tail + T[tail][w])
                if e <= hi[w]:
                    options.append((C[tail][w], w, e))
        options.sort()
        for c, w, e in options:
            if w == sink:
                done.append(route)
                open_route(first, done, cost + c, rest_neg)
                done.pop()
            else:
                covered[w] = True
                route.append(w)
                extend(route, w, e, first, done, cost + c, rest_neg - neg[w])
                route.pop()
                covered[w] = False

    try:
        open_route(0, [], 0.0, sum(neg))
    except _Timeout:
        stats["timed_out"] = True
    gap = 0.0
    if stats["timed_out"]:
        total_d = graph.total_direct()
        obj = total_d + best["cost"]
        bound = total_d + sum(neg)
        gap = (obj - bound) / max(abs(obj), EPS)
        log.info("exact route search hit the time limit; gap %.4f", gap)
    return _finish(graph, best["routes"], stats["nodes"], gap)


# -- heuristic ---------------------------------------------------------------


class _Routes:
    """Mutable route set with earliest/latest start bookkeeping."""

    def __init__(self, graph: TaskGraph, K: int):
        self.n = graph.n
        self.K = K
        self.sink = graph.n + 1
        lo, hi = graph.windows
        self.lo = np.concatenate(([0], lo, [0])).astype(np.int64)
        self.hi = np.concatenate(([0], hi, [_BIG])).astype(np.int64)
        self.T = graph.tau
        self.Cm = graph.cost
        self.routes: list[list[int]] = []
        self.e: list[list[int]] = []
        self.l: list[list[int]] = []
        self.where = np.full(self.n + 2, -1, dtype=np.int64)
        self.pos = np.full(self.n + 2, -1, dtype=np.int64)
        # per-vertex neighbourhood of covered tasks
        self.prv = np.zeros(self.n + 2, dtype=np.int64)
        self.nxt = np.full(self.n + 2, self.sink, dtype=np.int64)
        self.eprv = np.full(self.n + 2, -_BIG, dtype=np.int64)
        self.lnxt = np.full(self.n + 2, _BIG, dtype=np.int64)
        self._slot_cache = None

    def recompute(self, r):
        route = self.routes[r]
        lo, hi, T = self.lo, self.hi, self.T
        e = []
        for i, v in enumerate(route):
            e.append(int(lo[v]) if i == 0 else max(int(lo[v]), e[-1] + int(T[route[i - 1], v])))
        l = [0] * len(route)
        for i in range(len(route) - 1, -1, -1):
            v = route[i]
            l[i] = int(hi[v]) if i == len(route) - 1 else min(int(hi[v]), l[i + 1] - int(T[v, route[i + 1]]))
        self.e[r], self.l[r] = e, l
        last = len(route) - 1
        for i, v in enumerate(route):
            self.where[v] = r
            self.pos[v] = i
            self.prv[v] = route[i - 1] if i else 0
            self.eprv[v] = e[i - 1] if i else -_BIG
            self.nxt[v] = route[i + 1] if i < last else self.sink
            self.lnxt[v] = l[i + 1] if i < last else _BIG
        self._slot_cache = None

    def slots(self, r):
        """(prev, next, e_prev, l_next) arrays for every insertion slot of route r."""
        route = self.routes[r]
        prev = np.array([0] + route, dtype=np.int64)
        nxt = np.array(route + [self.sink], dtype=np.int64)
        e_prev = np.array([-_BIG] + self.e[r], dtype=np.int64)
        l_next = np.array(self.l[r] + [_BIG], dtype=np.int64)
        return prev, nxt, e_prev, l_next

    def all_slots(self):
        if self._slot_cache is None:
            parts = [self.slots(r) for r in range(len(self.routes))]
            if parts:
                prev, nxt, e_prev, l_next = (np.concatenate(x) for x in zip(*parts))
                owner = np.concatenate([np.full(len(p[0]), r, dtype=np.int64) for r, p in enumerate(parts)])
                index = np.concatenate([np.arange(len(p[0]), dtype=np.int64) for p in parts])
            else:
                prev = nxt = e_prev = l_next = owner = index = np.zeros(0, dtype=np.int64)
            self._slot_cache = (prev, nxt, e_prev, l_next, owner, index)
        return self._slot_cache

    def insertion(self, cand, prev, nxt, e_prev, l_next):
        """Delta of inserting each candidate into its slot; inf where infeasible."""
        T, Cm = self.T, self.Cm
        e_new = np.maximum(self.lo[cand], e_prev + T[prev, cand])
        ok = (e_new <= self.hi[cand]) & (e_new + T[cand, nxt] <= l_next)
        delta = Cm[prev, cand] + Cm[cand, nxt] - Cm[prev, nxt]
        return np.where(ok, delta, np.inf)

    def insert(self, v, r, i):
        if r == len(self.routes):
            self.routes.append([])
            self.e.append([])
            self.l.append([])
        self.routes[r].insert(i, v)
        self.recompute(r)

    def remove(self, v):
        r = int(self.where[v])
        self.routes[r].pop(int(self.pos[v]))
        self.where[v] = -1
        self.pos[v] = -1
        if self.routes[r]:
            self.recompute(r)
        else:
            self._drop_route(r)

    def replace(self, old, new):
        r, i = int(self.where[old]), int(self.pos[old])
        self.routes[r][i] = new
        self.where[old] = -1
        self.pos[old] = -1
        self.recompute(r)

    def _drop_route(self, r):
        del self.routes[r], self.e[r], self.l[r]
        for q in range(r, len(self.routes)):
            self.where[self.routes[q]] = q
        self._slot_cache = None

    def removal_ok(self, v):
        """Removing v keeps its route feasible."""
        a, b = int(self.prv[v]), int(self.nxt[v])
        if a == 0 or b == self.sink:
            return True
        e_b = max(int(self.lo[b]), int(self.eprv[v]) + int(self.T[a, b]))
        return e_b <= self.l[int(self.where[v])][int(self.pos[v]) + 1]


def _cheapest_insertion(state: _Routes) -> int:
    """Insert tasks one at a time, always the most negative marginal change."""
    n, K = state.n, state.K
    if K <= 0 or n == 0:
        return 0
    cand_all = np.arange(1, n + 1)
    D = np.full((n + 2, K + 1), np.inf)
    P = np.zeros((n + 2, K + 1), dtype=np.int64)
    uncovered = np.zeros(n + 2, dtype=bool)
    uncovered[1 : n + 1] = state.where[1 : n + 1] < 0

    def refresh(r):
        D[:, r] = np.inf
        cand = cand_all[uncovered[1 : n + 1]]
        if not len(cand):
            return
        best = np.full(len(cand), np.inf)
        bpos = np.zeros(len(cand), dtype=np.int64)
        for i, slot in enumerate(zip(*state.slots(r))):
            d = state.insertion(cand, *slot)
            better = d < best
            best[better] = d[better]
            bpos[better] = i
        D[cand, r] = best
        P[cand, r] = bpos

    def refresh_new():
        D[:, K] = np.inf
        if len(state.routes) < K:
            cand = cand_all[uncovered[1 : n + 1]]
            D[cand, K] = state.Cm[cand, state.sink]

    for r in range(len(state.routes)):
        refresh(r)
    refresh_new()
    inserted = 0
    while True:
        # row-major argmin: lowest task first, then lowest route index
        v, r = divmod(int(np.argmin(D)), K + 1)
        if not D[v, r] < -EPS:
            break
        if r == K:
            r, i = len(state.routes), 0
        else:
            i = int(P[v, r])
        state.insert(v, r, i)
        uncovered[v] = False
        D[v, :] = np.inf
        refresh(r)
        refresh_new()
        inserted += 1
    return inserted


def _relocate_pass(state: _Routes) -> int:
    moves = 0
    Cm = state.Cm
    for v in range(1, state.n + 1):
        r1 = int(state.where[v])
        if r1 < 0 or not state.removal_ok(v):
            continue
        a, b = int(state.prv[v]), int(state.nxt[v])
        gain = float(Cm[a, v] + Cm[v, b] - Cm[a, b])
        prev, nxt, e_prev, l_next, owner, index = state.all_slots()
        d = state.insertion(np.full(len(prev), v, dtype=np.int64), prev, nxt, e_prev, l_next)
        d[owner == r1] = np.inf
        options = [(-gain, 0, -1, -1)]  # serve directly
        if len(d):
            k = int(np.argmin(d))
            options.append((float(d[k]) - gain, 1, int(owner[k]), int(index[k])))
        if len(state.routes) < state.K and len(state.routes[r1]) > 1:
            options.append((float(Cm[v, state.sink]) - gain, 2, len(state.routes), 0))
        change, kind, r2, i2 = min(options)
        if change < -EPS:
            if kind == 1 and r2 > r1 and len(state.routes[r1]) == 1:
                r2 -= 1  # r1 disappears on removal
            state.remove(v)
            if kind == 2:
                r2 = len(state.routes)
            if kind:
                state.insert(v, r2, i2)
            moves += 1
    return moves


def _swap_pass(state: _Routes) -> int:
    """Exchange a covered task with a task on another route or with an uncovered one."""
    moves = 0
    Cm, T, lo, hi = state.Cm, state.T, state.lo, state.hi
    everyone = np.arange(1, state.n + 1)
    for v in range(1, state.n + 1):
        r1 = int(state.where[v])
        if r1 < 0:
            continue
        others = everyone[state.where[everyone] != r1]
        if not len(others):
            continue
        a, b, ea = int(state.prv[v]), int(state.nxt[v]), int(state.eprv[v])
        lb = int(state.lnxt[v])
        # w takes v's slot
        e_w = np.maximum(lo[others], ea + T[a, others])
        ok = (e_w <= hi[others]) & (e_w + T[others, b] <= lb)
        delta = Cm[a, others] + Cm[others, b] - (Cm[a, v] + Cm[v, b])
        # v takes w's slot when w is on a route; otherwise v is served directly
        covered = state.where[others] >= 0
        pa, pb = state.prv[others], state.nxt[others]
        e_v = np.maximum(lo[v], state.eprv[others] + T[pa, v])
        ok_v = (e_v <= hi[v]) & (e_v + T[v, pb] <= state.lnxt[others])
        delta = delta + np.where(covered, Cm[pa, v] + Cm[v, pb] - Cm[pa, others] - Cm[others, pb], 0.0)
        ok &= ~covered | ok_v
        delta = np.where(ok, delta, np.inf)
        k = int(np.argmin(delta))
        if delta[k] < -EPS:
            w = int(others[k])
            if covered[k]:
                r2, i2 = int(state.where[w]), int(state.pos[w])
                state.routes[r1][int(state.pos[v])] = w
                state.routes[r2][i2] = v
                state.recompute(r1)
                state.recompute(r2)
            else:
                state.replace(v, w)
            moves += 1
    return moves


def solve_heuristic(graph: TaskGraph, K: int, max_passes: int = 1000, time_limit: float | None = None) -> RoutePlan:
    """Cheapest insertion followed by inter-route relocate/swap descent."""
    state = _Routes(graph, K)
    _cheapest_insertion(state)
    deadline = None if time_limit is None else time.monotonic() + time_limit
    passes = 0
    while passes < max_passes:
        passes += 1
        moved = _relocate_pass(state) + _swap_pass(state) + _cheapest_insertion(state)
        log.debug("local search pass %d: %d moves", passes, moved)
        if not moved:
            break
        if deadline is not None and time.monotonic() > deadline:
            log.info("heuristic stopped at the time limit after %d passes", passes)
            break
    return _finish(graph, state.routes, nodes=passes)


# -- export ------------------------------------------------------------------


def write_plan_csv(plan: RoutePlan, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["route_id", "seq", "task_id", "start_min"])
        for k, route in enumerate(plan.routes):
            for s, t in enumerate(route):
                w.writerow([k, s, t, plan.start_times[t]])


def plan_summary(plan: RoutePlan) -> str:
    return (
        f"objective={plan.objective!r} gap={plan.optimality_gap:.6f} "
        f"routes={len(plan.routes)} covered={len(plan.covered)}"
    )
