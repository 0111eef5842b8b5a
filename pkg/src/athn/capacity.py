"""Hub capacity minimisation by shifting a fixed-route schedule.

Every LOAD and UNLOAD occupies one slot at its hub for sigma minutes
(half-open interval). Capacity of a hub is the peak number of simultaneous
slots; the objective is the sum over hubs.

Only LOAD/UNLOAD starts are searched. The fixed-duration jobs between them
turn into minimum time lags and PARK jobs absorb any waiting, so a route is a
chain of hub activities with release times, deadlines and minimum lags. The
remaining job starts are placed at their earliest consistent time once the
hub activities are fixed.

The optimisation works on capacity vectors. Given capacities, feasibility
splits into independent components of activities that share a route link or
could overlap at a hub. Each component is checked by a depth-first search
that only tries left-justified start times (an activity either starts as
early as its predecessor and domain allow, or exactly when another activity
at the same hub ends). The capacity vector itself is improved by single-hub
decrements from the warm start and then closed by branch-and-bound against
per-hub lower bounds.
"""

from __future__ import annotations

import bisect
import csv
import logging
import time
from dataclasses import dataclass, field, replace

from .errors import OracleRefusedError, VerificationError
from .jobs import HUB_JOBS, LOAD, PARK, RELOCATE, UNLOAD, JobSequence, compute_domains, default_horizon, expand_route, initial_schedule

log = logging.getLogger(__name__)

_NEG = -(10**15)


@dataclass(frozen=True)
class CapacityOptions:
    use_redundant_bounds: bool = True
    use_eq4_pinning: bool = True


@dataclass
class CapacityProblem:
    sequences: list  # JobSequence with domains
    hubs: list  # hub ids
    sigma: int
    options: CapacityOptions = field(default_factory=CapacityOptions)
    initial: list | None = None  # job-level start times per sequence (with end sentinel)

    def pinned(self, seq_index: int, job_index: int) -> bool:
        """True for a PARK whose duration is forced to zero by pinning."""
        if not self.options.use_eq4_pinning:
            return False
        seq = self.sequences[seq_index]
        return (
            seq.jobs[job_index].jtype is PARK
            and job_index + 1 < len(seq.jobs)
            and seq.jobs[job_index + 1].jtype is RELOCATE
        )


@dataclass
class CapacitySolution:
    S: list  # job-level start times per sequence, end sentinel last
    C: dict  # hub id -> capacity
    total: int
    proven_optimal: bool
    bound: int
    nodes: int = 0
    seconds: float = 0.0


def build_problem(plan, graph, options: CapacityOptions = CapacityOptions()) -> CapacityProblem:
    """Capacity problem for the routes of a plan, warm-started from its start times."""
    raw = [expand_route(r, graph, k) for k, r in enumerate(plan.routes)]
    with_windows = [compute_domains(s, graph, True) for s in raw]
    horizon = default_horizon(with_windows, graph.params)
    seqs = [compute_domains(s, graph, options.use_redundant_bounds, horizon) for s in raw]
    initial = [initial_schedule(s, plan.start_times) for s in seqs]
    return CapacityProblem(seqs, sorted(h.id for h in graph.hubs), graph.params.sigma_minutes, options, initial)


def apply_eq4_pinning(problem: CapacityProblem) -> CapacityProblem:
    """Force every relocation to begin as soon as the preceding unload ends."""
    return replace(problem, options=replace(problem.options, use_eq4_pinning=True))


def with_options(problem: CapacityProblem, options: CapacityOptions, graph) -> CapacityProblem:
    """Same routes with domains re-derived under different options."""
    raw = [JobSequence(s.route, s.tasks, tuple(replace(j, dom_lo=None, dom_hi=None) for j in s.jobs)) for s in problem.sequences]
    with_windows = [compute_domains(s, graph, True) for s in raw]
    horizon = default_horizon(with_windows, graph.params)
    seqs = [compute_domains(s, graph, options.use_redundant_bounds, horizon) for s in raw]
    return CapacityProblem(seqs, problem.hubs, problem.sigma, options, problem.initial)


# -- verification and measurement ---------------------------------------------


def verify_schedule(S, problem: CapacityProblem) -> None:
    """Raise VerificationError naming the first violated constraint."""
    for q, seq in enumerate(problem.sequences):
        starts = S[q]
        if len(starts) != len(seq.jobs) + 1:
            raise VerificationError(f"route {seq.route}: expected {len(seq.jobs) + 1} start times, got {len(starts)}")
        for k, j in enumerate(seq.jobs):
            s, s_next = starts[k], starts[k + 1]
            if not j.dom_lo <= s <= j.dom_hi:
                raise VerificationError(f"domain: route {seq.route} job {j.index} ({j.jtype.value}) starts {s} outside [{j.dom_lo}, {j.dom_hi}]")
            if s_next < s:
                raise VerificationError(f"interval: route {seq.route} job {j.index} ends before it starts")
            if j.duration is not None and s_next != s + j.duration:
                raise VerificationError(f"duration: route {seq.route} job {j.index} ({j.jtype.value}) lasts {s_next - s}, expected {j.duration}")
            if problem.pinned(q, k) and s_next != s:
                raise VerificationError(f"pinning: route {seq.route} relocation after job {j.index} does not start immediately")


def _hub_intervals(S, sequences):
    by_hub = {}
    for seq, starts in zip(sequences, S):
        for k, j in enumerate(seq.jobs):
            if j.jtype in HUB_JOBS:
                by_hub.setdefault(j.hub, []).append((starts[k], starts[k + 1]))
    return by_hub


def measure_capacity(S, problem: CapacityProblem, verify: bool = True) -> dict:
    """Peak concurrent LOAD/UNLOAD count per hub, by sweep line."""
    if verify:
        verify_schedule(S, problem)
    caps = {h: 0 for h in problem.hubs}
    for hub, intervals in _hub_intervals(S, problem.sequences).items():
        events = []
        for a, b in intervals:
            if b > a:
                events.append((a, 1))
                events.append((b, -1))
        # ends sort before starts at the same minute: [a, b) intervals that touch do not overlap
        events.sort()
        run = peak = 0
        for _, d in events:
            run += d
            peak = max(peak, run)
        caps[hub] = peak
    return caps


def measure_capacity_by_minute(S, problem: CapacityProblem) -> dict:
    """Same as measure_capacity, by counting every minute (slow; for checking)."""
    caps = {h: 0 for h in problem.hubs}
    for hub, intervals in _hub_intervals(S, problem.sequences).items():
        count = {}
        for a, b in intervals:
            for m in range(a, b):
                count[m] = count.get(m, 0) + 1
        caps[hub] = max(count.values(), default=0)
    return caps


def total_capacity(caps: dict) -> int:
    return sum(caps.values())


# -- reduced model --------------------------------------------------------------


@dataclass
class _Activity:
    seq: int  # sequence position in problem.sequences
    job: int  # 0-based job position
    hub: int
    lo: int
    hi: int


class _Reduced:
    """Hub activities (LOAD/UNLOAD) with chain lags and propagated domains."""

    def __init__(self, problem: CapacityProblem):
        self.problem = problem
        self.sigma = problem.sigma
        self.acts: list[_Activity] = []
        self.lag: list[int | None] = []  # min lag to the next activity on the route
        self.bounds = []  # propagated job-level (lo, hi) per sequence
        for q, seq in enumerate(problem.sequences):
            lo, hi = self._propagate(q, seq)
            self.bounds.append((lo, hi))
            first = len(self.acts)
            for k, j in enumerate(seq.jobs):
                if j.jtype in HUB_JOBS:
                    if len(self.acts) > first:
                        prev = self.acts[-1]
                        self.lag[-1] = sum(seq.jobs[m].duration or 0 for m in range(prev.job, k))
                    self.acts.append(_Activity(q, k, j.hub, lo[k], hi[k]))
                    self.lag.append(None)
        self._components()

    def _propagate(self, q, seq: JobSequence):
        """Bounds consistency along one route's job chain."""
        jobs = seq.jobs
        n = len(jobs)
        lo = [j.dom_lo for j in jobs]
        hi = [j.dom_hi for j in jobs]

        def dur(k):
            if jobs[k].duration is not None:
                return jobs[k].duration, True
            return 0, self.problem.pinned(q, k)

        for k in range(n - 1):
            d, fixed = dur(k)
            lo[k + 1] = max(lo[k + 1], lo[k] + d)
            if fixed:
                lo[k] = max(lo[k], lo[k + 1] - d)
        for k in range(n - 2, -1, -1):
            d, fixed = dur(k)
            hi[k] = min(hi[k], hi[k + 1] - d)
            if fixed:
                hi[k + 1] = min(hi[k + 1], hi[k] + d)
        # a second forward sweep settles lower bounds raised through fixed links
        for k in range(n - 1):
            d, fixed = dur(k)
            lo[k + 1] = max(lo[k + 1], lo[k] + d)
        for k in range(n):
            if lo[k] > hi[k]:
                raise VerificationError(f"route {seq.route}: job {jobs[k].index} has no feasible start")
        return lo, hi

    def _components(self):
        n = len(self.acts)
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        self.link = [False] * n  # chain link i -> i+1 can bind
        for i in range(n - 1):
            if self.lag[i] is not None and self.acts[i + 1].lo < self.acts[i].hi + self.lag[i]:
                self.link[i] = True
                union(i, i + 1)
        if self.sigma > 0:
            by_hub = {}
            for i, a in enumerate(self.acts):
                by_hub.setdefault(a.hub, []).append(i)
            for members in by_hub.values():
                members.sort(key=lambda i: (self.acts[i].lo, i))
                reach, holder = _NEG, None
                for i in members:
                    a = self.acts[i]
                    if holder is not None and a.lo < reach:
                        union(holder, i)
                    if a.hi + self.sigma > reach:
                        reach, holder = a.hi + self.sigma, i
        groups = {}
        for i in range(n):
            groups.setdefault(find(i), []).append(i)
        self.components = [sorted(g) for _, g in sorted(groups.items())]
        self.comp_of = [0] * n
        for c, members in enumerate(self.components):
            for i in members:
                self.comp_of[i] = c
        self.comp_hubs = [sorted({self.acts[i].hub for i in g}) for g in self.components]

    def reduced_starts(self, S):
        return [S[a.seq][a.job] for a in self.acts]

    def materialize(self, starts):
        """Job-level start times from hub-activity starts (earliest placement elsewhere)."""
        fixed = {}
        for a, s in zip(self.acts, starts):
            fixed[(a.seq, a.job)] = s
        out = []
        for q, seq in enumerate(self.problem.sequences):
            lo, hi = self.bounds[q]
            S = []
            t = None
            for k, j in enumerate(seq.jobs):
                if (q, k) in fixed:
                    s = fixed[(q, k)]
                else:
                    s = lo[k] if t is None else max(lo[k], t)
                    if j.jtype is PARK and k + 1 < len(seq.jobs) and (q, k + 1) in fixed:
                        # park before a hub activity may start no later than it
                        s = min(s, fixed[(q, k + 1)])
                S.append(s)
                t = s + (j.duration or 0)
            S.append(t)
            out.append(S)
        return out


def _peak_with(starts_sorted, t, sigma):
    """Max concurrency over [t, t+sigma) among equal-length intervals plus one more at t."""
    i = bisect.bisect_right(starts_sorted, t - sigma)
    j = bisect.bisect_left(starts_sorted, t + sigma)
    window = starts_sorted[i:j]
    if not window:
        return 1
    peak = 0
    # concurrency at minute m counts starts in (m - sigma, m]; it only rises at starts
    for m in [t] + [s for s in window if s > t]:
        lo_k = bisect.bisect_right(window, m - sigma)
        hi_k = bisect.bisect_right(window, m)
        peak = max(peak, hi_k - lo_k)
    return peak + 1


class _Budget:
    def __init__(self, node_limit=None, deadline=None):
        self.nodes = 0
        self.node_limit = node_limit
        self.deadline = deadline
        self.exhausted = False

    def spend(self):
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            self.exhausted = True
        elif self.deadline is not None and self.nodes & 255 == 0 and time.monotonic() > self.deadline:
            self.exhausted = True
        return not self.exhausted


class _OutOfBudget(Exception):
    pass


def _solve_component(red: _Reduced, members, caps: dict, budget: _Budget, call_limit: int):
    """Find start times for the activities of one component under hub capacities.

    ``caps`` maps hub -> capacity; hubs absent from ``caps`` are unconstrained.
    Returns a dict activity -> start, False if infeasible, None if the node
    budget ran out.

    Depth-first search over left-justified schedules. At every node the chain
    frontier with the smallest earliest start ``e`` is either fixed at ``e``
    or postponed to the next minute at which a same-hub activity can end.
    Every unfixed activity starts at or after ``e``, which keeps the
    postponement complete.
    """
    sigma = red.sigma
    acts = red.acts
    lag = red.lag
    member_set = set(members)
    chains = []
    for i in members:
        if i - 1 in member_set and red.link[i - 1]:
            chains[-1].append(i)
        else:
            chains.append([i])
    lst, chain_of, pos = {}, {}, {}
    for c, chain in enumerate(chains):
        nxt = None
        for k in range(len(chain) - 1, -1, -1):
            i = chain[k]
            lst[i] = acts[i].hi if nxt is None else min(acts[i].hi, lst[nxt] - lag[i])
            nxt = i
            chain_of[i], pos[i] = c, k
    same_hub = {}
    for i in members:
        same_hub.setdefault(acts[i].hub, []).append(i)

    n_chains = len(chains)
    start = {}
    fixed_by_hub = {h: [] for h in same_hub}
    front = [0] * n_chains
    floor = [_NEG] * n_chains

    def calc(c):
        chain = chains[c]
        if front[c] >= len(chain):
            return None
        i = chain[front[c]]
        e = acts[i].lo
        if front[c]:
            p = chain[front[c] - 1]
            e = max(e, start[p] + lag[p])
        return max(e, floor[c])

    est = [calc(c) for c in range(n_chains)]
    if any(est[c] > lst[chains[c][0]] for c in range(n_chains)):
        return False

    trail = []  # (was_fix, chain, activity, start, saved floor, saved est)
    postpone = False
    nodes = 0
    while True:
        nodes += 1
        if nodes > call_limit or not budget.spend():
            return None
        c, e = -1, None
        for k in range(n_chains):
            v = est[k]
            if v is not None and (e is None or v < e):
                c, e = k, v
        if c < 0:
            return dict(start)
        i = chains[c][front[c]]
        hub = acts[i].hub
        cap = caps.get(hub)
        if not postpone:
            fixed = fixed_by_hub[hub]
            if cap is None or _peak_with(fixed, e, sigma) <= cap:
                start[i] = e
                bisect.insort(fixed, e)
                trail.append((True, c, i, e, floor[c], est[c]))
                front[c] += 1
                floor[c] = _NEG
                est[c] = calc(c)
                if est[c] is None or est[c] <= lst[chains[c][front[c]]]:
                    continue
            else:
                postpone = True
                continue
        else:
            postpone = False
            nxt = None
            if cap is not None:
                for b in same_hub[hub]:
                    if b == i:
                        continue
                    if b in start:
                        end = start[b] + sigma
                    else:
                        cb = chain_of[b]
                        low = est[cb] if front[cb] == pos[b] else acts[b].lo
                        end = max(low, e) + sigma
                    if end > e and (nxt is None or end < nxt):
                        nxt = end
            if nxt is not None and nxt <= lst[i]:
                trail.append((False, c, i, e, floor[c], est[c]))
                floor[c] = nxt
                est[c] = calc(c)
                continue
        # dead end: undo to the most recent fix and try postponing it instead
        while trail:
            was_fix, c0, i0, e0, fl, es = trail.pop()
            if was_fix:
                del start[i0]
                fixed_by_hub[acts[i0].hub].remove(e0)
                front[c0] -= 1
            floor[c0], est[c0] = fl, es
            if was_fix:
                postpone = True
                break
        if not postpone:
            return False


def _satisfies(red: _Reduced, members, starts, caps):
    """Whether given starts respect the capacities (chains/domains assumed)."""
    by_hub = {}
    for i in members:
        by_hub.setdefault(red.acts[i].hub, []).append(starts[i])
    for hub, ss in by_hub.items():
        cap = caps.get(hub)
        if cap is None:
            continue
        if red.sigma > 0 and _max_overlap(sorted(ss), red.sigma) > cap:
            return False
    return True


def _max_overlap(starts_sorted, sigma):
    peak = 0
    j = 0
    for i, s in enumerate(starts_sorted):
        while starts_sorted[j] <= s - sigma:
            j += 1
        peak = max(peak, i - j + 1)
    return peak


class _Search:
    def __init__(self, red: _Reduced, budget: _Budget, call_limit: int):
        self.red = red
        self.budget = budget
        self.call_limit = call_limit
        self.cache = {}
        self.incomplete = False

    def check(self, c, caps: dict):
        """Feasibility of component c; caps restricted to its hubs."""
        hubs = self.red.comp_hubs[c]
        key = (c, tuple(caps.get(h) for h in hubs))
        if key in self.cache:
            return self.cache[key]
        local = {h: caps[h] for h in hubs if caps.get(h) is not None}
        res = _solve_component(self.red, self.red.components[c], local, self.budget, self.call_limit)
        if res is None:
            self.incomplete = True
        self.cache[key] = res
        return res


def _hub_lower_bounds(search: _Search, caps0: dict, hubs) -> dict:
    """Per-hub relaxation: smallest capacity at h alone, other hubs unconstrained."""
    red = search.red
    lb = {h: 0 for h in hubs}
    if red.sigma <= 0:
        return lb
    for c, chubs in enumerate(red.comp_hubs):
        for h in chubs:
            lb[h] = max(lb[h], 1)
    for c, chubs in enumerate(red.comp_hubs):
        for h in chubs:
            while lb[h] < caps0[h]:
                res = search.check(c, {h: lb[h]})
                if res is False:
                    lb[h] += 1
                else:
                    break
            if search.budget.exhausted:
                return lb
    return lb


def minimize_capacity(
    problem: CapacityProblem,
    time_limit: float = 1800.0,
    node_limit: int | None = None,
    call_node_limit: int = 200_000,
) -> CapacitySolution:
    """Shift LOAD/UNLOAD starts within their domains to minimise total hub capacity."""
    t0 = time.monotonic()
    budget = _Budget(node_limit, t0 + time_limit)
    red = _Reduced(problem)
    S0 = problem.initial if problem.initial is not None else red.materialize([a.lo for a in red.acts])
    caps0 = measure_capacity(S0, problem)
    starts = red.reduced_starts(S0)
    if red.sigma <= 0 or not red.acts:
        return CapacitySolution(S0, caps0, total_capacity(caps0), True, total_capacity(caps0), 0, time.monotonic() - t0)

    search = _Search(red, budget, call_node_limit)
    lb = _hub_lower_bounds(search, caps0, problem.hubs)
    log.info("per-hub bounds: total %d (start %d) after %d nodes", sum(lb.values()), total_capacity(caps0), budget.nodes)
    caps = dict(caps0)
    comps_at = {h: [] for h in problem.hubs}
    for c, chubs in enumerate(red.comp_hubs):
        for h in chubs:
            comps_at[h].append(c)

    # descent: lower one hub at a time while every affected component stays feasible
    improved = True
    while improved and not budget.exhausted:
        improved = False
        order = sorted(problem.hubs, key=lambda h: (-(caps[h] - lb[h]), h))
        for h in order:
            if caps[h] <= lb[h]:
                continue
            trial = dict(caps)
            trial[h] -= 1
            updates = {}
            ok = True
            for c in comps_at[h]:
                members = red.components[c]
                if _satisfies(red, members, starts, trial):
                    continue
                res = search.check(c, trial)
                if not res:
                    ok = False
                    break
                updates.update(res)
            if ok:
                caps = trial
                for i, s in updates.items():
                    starts[i] = s
                improved = True
            if budget.exhausted:
                break

    log.info("descent: total %d after %d nodes", sum(caps.values()), budget.nodes)
    # branch-and-bound over capacity vectors, one hub cluster at a time
    proven = not search.incomplete and not budget.exhausted
    bound_total = 0
    for cluster_hubs, cluster_comps in _hub_clusters(red, problem.hubs):
        current = sum(caps[h] for h in cluster_hubs)
        floor_total = sum(lb[h] for h in cluster_hubs)
        if current == floor_total:
            bound_total += current
            continue
        if budget.exhausted:
            proven = False
            bound_total += floor_total
            continue
        result = _close_cluster(search, cluster_hubs, cluster_comps, caps, lb, comps_at)
        if result is not None:
            best_caps, best_starts = result
            for h in cluster_hubs:
                caps[h] = best_caps[h]
            for i, s in best_starts.items():
                starts[i] = s
        closed = result is not None or not (search.incomplete or budget.exhausted)
        if closed and not search.incomplete and not budget.exhausted:
            bound_total += sum(caps[h] for h in cluster_hubs)
        else:
            proven = False
            bound_total += floor_total

    S = red.materialize(starts)
    final = measure_capacity(S, problem)
    total = total_capacity(final)
    if final != {h: caps[h] for h in problem.hubs}:
        # capacities are upper limits; the realised peaks can only be lower
        assert all(final[h] <= caps[h] for h in problem.hubs)
    if proven:
        bound_total = total
    return CapacitySolution(S, final, total, proven, min(bound_total, total), budget.nodes, time.monotonic() - t0)


def _hub_clusters(red: _Reduced, hubs):
    parent = {h: h for h in hubs}

    def find(h):
        while parent[h] != h:
            parent[h] = parent[parent[h]]
            h = parent[h]
        return h

    for chubs in red.comp_hubs:
        for h in chubs[1:]:
            a, b = find(chubs[0]), find(h)
            if a != b:
                parent[max(a, b)] = min(a, b)
    clusters = {}
    for h in hubs:
        clusters.setdefault(find(h), []).append(h)
    comps = {}
    for c, chubs in enumerate(red.comp_hubs):
        comps.setdefault(find(chubs[0]), []).append(c)
    return [(sorted(hs), comps.get(root, [])) for root, hs in sorted(clusters.items())]


def _close_cluster(search: _Search, cluster_hubs, cluster_comps, caps, lb, comps_at):
    """Exact search for the cheapest feasible capacities on one hub cluster.

    Returns (caps, starts) of a strictly better vector, or None when the
    incumbent is optimal (or the budget ran out).
    """
    red = search.red
    n_at = {h: 0 for h in cluster_hubs}
    for a in red.acts:
        if a.hub in n_at:
            n_at[a.hub] += 1
    best = {"total": sum(caps[h] for h in cluster_hubs), "caps": None}
    order = sorted(cluster_hubs, key=lambda h: (-(caps[h] - lb[h]), h))
    assigned = {}

    def consistent(h):
        # a component is checked once all of its hubs have a capacity
        for c in comps_at[h]:
            if any(g not in assigned for g in red.comp_hubs[c]):
                continue
            if search.check(c, assigned) is False:
                return False
        return True

    def dfs(k, partial):
        if search.budget.exhausted:
            raise _OutOfBudget
        if k == len(order):
            best["total"] = partial
            best["caps"] = dict(assigned)
            return
        h = order[k]
        rest = sum(lb[g] for g in order[k + 1 :])
        top = min(n_at[h], best["total"] - 1 - partial - rest)
        for v in range(lb[h], top + 1):
            if partial + v + rest >= best["total"]:
                break
            assigned[h] = v
            if consistent(h):
                dfs(k + 1, partial + v)
            del assigned[h]

    try:
        dfs(0, 0)
    except _OutOfBudget:
        pass
    if best["caps"] is None:
        return None
    starts = {}
    for c in cluster_comps:
        res = search.check(c, best["caps"])
        if not res:
            return None
        starts.update(res)
    return best["caps"], starts


# -- relaxation and oracles --------------------------------------------------------


def single_task_relaxation(problem: CapacityProblem, graph) -> CapacityProblem:
    """Every task becomes its own one-task route; windows are unchanged."""
    seqs, initial = [], []
    k = 0
    for q, seq in enumerate(problem.sequences):
        for t in seq.tasks:
            raw = expand_route([t], graph, k)
            seqs.append(raw)
            k += 1
    with_windows = [compute_domains(s, graph, True) for s in seqs]
    horizon = default_horizon(with_windows, graph.params)
    seqs = [compute_domains(s, graph, problem.options.use_redundant_bounds, horizon) for s in seqs]
    initial = None
    if problem.initial is not None:
        load_start = {}
        for seq, S in zip(problem.sequences, problem.initial):
            for kk, j in enumerate(seq.jobs):
                if j.jtype is LOAD:
                    load_start[j.task] = S[kk]
        initial = [initial_schedule(s, load_start) for s in seqs]
    return CapacityProblem(seqs, problem.hubs, problem.sigma, problem.options, initial)


def lower_bound(problem: CapacityProblem, graph, time_limit: float = 1800.0, node_limit: int | None = None) -> int:
    """Capacity optimum with inter-task route constraints removed (a valid lower bound)."""
    relaxed = single_task_relaxation(problem, graph)
    sol = minimize_capacity(relaxed, time_limit=time_limit, node_limit=node_limit)
    return sol.total if sol.proven_optimal else sol.bound


ORACLE_MAX_TASKS = 8
ORACLE_MAX_WINDOW = 240


def _oracle_guard(problem: CapacityProblem):
    n_tasks = sum(len(s.tasks) for s in problem.sequences)
    widest = max((j.dom_hi - j.dom_lo for s in problem.sequences for j in s.jobs if j.jtype is LOAD), default=0)
    if n_tasks > ORACLE_MAX_TASKS or widest > ORACLE_MAX_WINDOW:
        raise OracleRefusedError(f"{n_tasks} tasks with {widest}-minute windows exceed the oracle limits")


def brute_force_optimum(problem: CapacityProblem) -> CapacitySolution:
    """Exact optimum of the full job-level model over the whole minute grid.

    Every job start is a variable; every LOAD/UNLOAD start is expanded into
    one 0/1 indicator per minute of its domain so that hub usage can be
    counted minute by minute. The resulting time-indexed program is solved
    to proven optimality with HiGHS. It shares no code with the search in
    minimize_capacity.
    """
    import numpy as np
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    _oracle_guard(problem)
    sigma = problem.sigma
    hubs = list(problem.hubs)
    # variable layout: job starts (incl. end sentinel), then per-minute indicators, then capacities
    s_index = []
    n_vars = 0
    lows, highs = [], []
    for seq in problem.sequences:
        idx = []
        for j in seq.jobs:
            idx.append(n_vars)
            lows.append(j.dom_lo)
            highs.append(j.dom_hi)
            n_vars += 1
        idx.append(n_vars)
        lows.append(-1e9)
        highs.append(1e9)
        n_vars += 1
        s_index.append(idx)
    z_index = []  # (hub, job var, first minute, indicator vars)
    for q, seq in enumerate(problem.sequences):
        for k, j in enumerate(seq.jobs):
            if j.jtype in HUB_JOBS:
                zs = list(range(n_vars, n_vars + j.dom_hi - j.dom_lo + 1))
                n_vars += len(zs)
                lows.extend([0] * len(zs))
                highs.extend([1] * len(zs))
                z_index.append((j.hub, s_index[q][k], j.dom_lo, zs))
    c_index = {h: n_vars + i for i, h in enumerate(hubs)}
    n_vars += len(hubs)
    lows.extend([0] * len(hubs))
    highs.extend([1e6] * len(hubs))

    rows = []
    lb_r, ub_r = [], []

    def row(coeffs, lo, hi):
        rows.append(coeffs)
        lb_r.append(lo)
        ub_r.append(hi)

    for q, seq in enumerate(problem.sequences):
        idx = s_index[q]
        for k, j in enumerate(seq.jobs):
            a, b = idx[k], idx[k + 1]
            if j.duration is not None:
                row({b: 1, a: -1}, j.duration, j.duration)
            elif problem.pinned(q, k):
                row({b: 1, a: -1}, 0, 0)
            else:
                row({b: 1, a: -1}, 0, np.inf)
    for hub, svar, first, zs in z_index:
        row({z: 1 for z in zs}, 1, 1)
        coeffs = {z: first + m for m, z in enumerate(zs)}
        coeffs[svar] = coeffs.get(svar, 0) - 1
        row(coeffs, 0, 0)
    if sigma > 0:
        minutes = {}
        for hub, svar, first, zs in z_index:
            for m, z in enumerate(zs):
                s = first + m
                for tau in range(s, s + sigma):
                    minutes.setdefault((hub, tau), []).append(z)
        for (hub, tau), zs in sorted(minutes.items()):
            coeffs = {z: 1 for z in zs}
            coeffs[c_index[hub]] = -1
            row(coeffs, -np.inf, 0)

    A = lil_matrix((len(rows), n_vars))
    for r, coeffs in enumerate(rows):
        for v, a in coeffs.items():
            A[r, v] = a
    cost = np.zeros(n_vars)
    for h in hubs:
        cost[c_index[h]] = 1.0
    integrality = np.ones(n_vars)
    res = milp(
        cost,
        constraints=LinearConstraint(A.tocsr(), lb_r, ub_r),
        integrality=integrality,
        bounds=Bounds(lows, highs),
        options={"mip_rel_gap": 0.0, "presolve": True},
    )
    if res.status != 0:
        raise VerificationError(f"oracle MILP did not solve: {res.message}")
    x = np.round(res.x).astype(int)
    S = [[int(x[v]) for v in idx] for idx in s_index]
    caps = measure_capacity(S, problem)
    total = total_capacity(caps)
    return CapacitySolution(S, caps, total, True, total)


def exhaustive_optimum(problem: CapacityProblem, limit: int = 2_000_000) -> int:
    """Optimal total by literal enumeration of LOAD/UNLOAD starts (tiny instances).

    For each combination the remaining jobs are checked by propagating the
    job chain with those starts pinned.
    """
    import itertools

    hub_jobs = [(q, k) for q, seq in enumerate(problem.sequences) for k, j in enumerate(seq.jobs) if j.jtype in HUB_JOBS]
    ranges = [range(problem.sequences[q].jobs[k].dom_lo, problem.sequences[q].jobs[k].dom_hi + 1) for q, k in hub_jobs]
    size = 1
    for r in ranges:
        size *= len(r)
    if size > limit:
        raise OracleRefusedError(f"{size} start combinations exceed the enumeration limit {limit}")
    best = None
    for combo in itertools.product(*ranges):
        pinned = dict(zip(hub_jobs, combo))
        S = _complete_schedule(problem, pinned)
        if S is None:
            continue
        total = total_capacity(measure_capacity(S, problem, verify=False))
        if best is None or total < best:
            best = total
    return best


def _complete_schedule(problem: CapacityProblem, pinned):
    """Earliest job-level schedule with the given starts pinned, or None."""
    out = []
    for q, seq in enumerate(problem.sequences):
        S = []
        t = None
        for k, j in enumerate(seq.jobs):
            if (q, k) in pinned:
                s = pinned[(q, k)]
                if t is not None and s < t:
                    return None
                if t is not None and k and (seq.jobs[k - 1].duration is not None or problem.pinned(q, k - 1)) and s != t:
                    return None
            else:
                s = j.dom_lo if t is None else max(j.dom_lo, t)
            if not j.dom_lo <= s <= j.dom_hi:
                return None
            S.append(s)
            t = s + (j.duration or 0)
        S.append(t)
        out.append(S)
    try:
        verify_schedule(out, problem)
    except VerificationError:
        return None
    return out


# -- reporting -------------------------------------------------------------------


@dataclass
class ShiftReport:
    load_shifts: list
    unload_shifts: list
    loads_total: int
    loads_shifted: int

    @property
    def fraction_loads_shifted(self) -> float:
        return self.loads_shifted / self.loads_total if self.loads_total else 0.0


def shift_report(before_S, after_S, problem: CapacityProblem) -> ShiftReport:
    loads, unloads = [], []
    for seq, b, a in zip(problem.sequences, before_S, after_S):
        for k, j in enumerate(seq.jobs):
            if j.jtype is LOAD:
                loads.append(abs(a[k] - b[k]))
            elif j.jtype is UNLOAD:
                unloads.append(abs(a[k] - b[k]))
    return ShiftReport(loads, unloads, len(loads), sum(1 for s in loads if s))


def write_solution_csv(problem: CapacityProblem, before_S, after_S, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["route", "index", "type", "task", "hub", "start_before", "start_after"])
        for seq, b, a in zip(problem.sequences, before_S, after_S):
            for k, j in enumerate(seq.jobs):
                w.writerow([seq.route, j.index, j.jtype.value, "" if j.task is None else j.task, "" if j.hub is None else j.hub, b[k], a[k]])


def write_capacity_csv(hubs, before: dict, after: dict, lower: dict | None, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hub_id", "cap_before", "cap_after", "lower_bound"])
        for h in hubs:
            w.writerow([h, before.get(h, 0), after.get(h, 0), "" if lower is None else lower.get(h, 0)])
