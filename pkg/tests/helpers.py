"""Shared builders and independent oracles for the test suite.

The route oracle below recomputes every distance, time and cost from raw
coordinates with plain ``math`` calls; it never touches TaskGraph.
"""

import itertools
import math

from athn.instance import GeneratorConfig, GeoPoint, Instance, Load, Params, generate_synthetic
from athn.network import Hub, Task, build_tasks, kmeans_hubs
from athn.task_graph import build_graph


def small_case(seed, n=6, hubs=3, params=None, horizon=900, box=(300.0, 200.0), regions=2):
    params = params or Params()
    params = Params(**{**params.__dict__, "horizon_minutes": horizon})
    cfg = GeneratorConfig(num_loads=n, num_regions=regions, region_spread_miles=30.0, horizon_minutes=horizon, bounding_box_miles=box)
    inst = generate_synthetic(cfg, seed, params)
    # never ask for more hubs than there are endpoints
    hub_list = kmeans_hubs(inst, min(hubs, 2 * n), seed=seed)
    graph = build_graph(build_tasks(inst, hub_list), hub_list, params)
    return inst, hub_list, graph


def manual_case(hub_xy, task_specs, params):
    """task_specs: (origin_hub, dest_hub, pickup) with loads placed exactly on their hubs."""
    hubs = [Hub(i, GeoPoint(float(x), float(y))) for i, (x, y) in enumerate(hub_xy)]
    tasks = []
    for t, (a, b, p) in enumerate(task_specs):
        o = hubs[a].location
        d = hubs[b].location
        if a == b:
            d = GeoPoint(d.x + 1.0, d.y)
        tasks.append(Task(t, t, a, b, p, o, d))
    return hubs, tasks, build_graph(tasks, hubs, params)


def manual_instance(points, params):
    loads = [Load(i, GeoPoint(*o), GeoPoint(*d), r) for i, (o, d, r) in enumerate(points)]
    return Instance(tuple(loads), params, 0)


# -- route oracle ---------------------------------------------------------------------


def _minutes(miles, speed):
    return int(math.floor(60.0 * miles / speed + 0.5))


def _hdist(a, b):
    return math.hypot(a.x - b.x, a.y - b.y)


class RouteOracle:
    """Exhaustive optimum of the routing stage, from raw coordinates."""

    def __init__(self, tasks, hubs, params):
        self.tasks = list(tasks)
        self.hub = {h.id: h.location for h in hubs}
        self.p = params
        a, b = params.alpha, params.beta
        self.d = [2.0 * _hdist(t.origin, t.destination) for t in self.tasks]
        self.auto = []
        self.drive = []
        for t in self.tasks:
            hp, hm = self.hub[t.origin_hub], self.hub[t.dest_hub]
            firstlast = _hdist(t.origin, hp) + _hdist(hm, t.destination)
            self.auto.append(firstlast / (1.0 - b) + a * _hdist(hp, hm))
            self.drive.append(_minutes(_hdist(hp, hm), params.speed_mph))

    def arc(self, i, j):
        """(tau, cost) of serving task j right after task i."""
        ti, tj = self.tasks[i], self.tasks[j]
        reloc = _hdist(self.hub[ti.dest_hub], self.hub[tj.origin_hub])
        s = self.p.sigma_minutes
        tau = s + self.drive[i] + s + _minutes(reloc, self.p.speed_mph)
        return tau, (self.auto[i] + self.p.alpha * reloc) - self.d[i]

    def route_terms(self, seq):
        """Cost terms of an ordered route, or None if no start times fit the windows."""
        delta = self.p.delta_minutes
        x = None
        terms = [0.0]
        for k, j in enumerate(seq):
            p = self.tasks[j].pickup_time
            if k == 0:
                x = p - delta
            else:
                tau, c = self.arc(seq[k - 1], j)
                terms.append(c)
                x = max(p - delta, x + tau)
            if x > p + delta:
                return None
        last = seq[-1]
        terms.append(self.auto[last] - self.d[last])
        return terms

    def optimum(self, K):
        n = len(self.tasks)
        best = math.fsum(self.d)
        best_routes = []
        cache = {}
        for labels in itertools.product(range(K + 1), repeat=n):
            groups = [[i for i in range(n) if labels[i] == r] for r in range(1, K + 1)]
            # routes are unlabelled: only the canonical labelling (groups ordered by first task) is kept
            used = sum(1 for g in groups if g)
            if any(not g for g in groups[:used]) or [g[0] for g in groups[:used]] != sorted(g[0] for g in groups[:used]):
                continue
            options = []
            for g in groups:
                if not g:
                    continue
                key = tuple(g)
                if key not in cache:
                    cache[key] = [(perm, t) for perm in itertools.permutations(g) if (t := self.route_terms(perm)) is not None]
                options.append(cache[key])
            if any(not o for o in options):
                continue
            for combo in itertools.product(*options):
                terms = list(self.d)
                for _, t in combo:
                    terms.extend(t)
                total = math.fsum(terms)
                if total < best:
                    best = total
                    best_routes = [list(perm) for perm, _ in combo]
        return best, best_routes
