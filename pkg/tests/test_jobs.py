import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from athn.errors import InfeasibleExpansionError
from athn.instance import Params
from athn.jobs import (
    DRIVE,
    LOAD,
    PARK,
    RELOCATE,
    UNLOAD,
    compute_domains,
    expand_plan,
    expand_route,
    initial_schedule,
    write_jobs_csv,
)
from athn.routing import RoutePlan, earliest_start, solve_exact

from helpers import manual_case, small_case

TASK_PATTERN = [LOAD, PARK, DRIVE, PARK, UNLOAD]
LINK_PATTERN = [PARK, RELOCATE, PARK]


def test_single_task_route():
    _, _, g = manual_case([(0, 0), (130, 0)], [(0, 1, 600)], Params())
    seq = expand_route([0], g)
    assert [j.jtype for j in seq.jobs] == TASK_PATTERN
    assert [j.index for j in seq.jobs] == [1, 2, 3, 4, 5]
    assert [j.duration for j in seq.jobs] == [30, None, 120, None, 30]
    assert [j.hub for j in seq.jobs] == [0, 0, None, 1, 1]


def test_two_task_route_pattern():
    _, _, g = manual_case([(0, 0), (130, 0), (0, 65)], [(0, 1, 600), (2, 0, 1200)], Params())
    seq = expand_route([0, 1], g)
    assert len(seq) == 13
    assert [j.jtype for j in seq.jobs] == TASK_PATTERN + LINK_PATTERN + TASK_PATTERN
    # relocation from hub 1 to hub 2: hypot(130, 65) = 145.3 miles = 134 minutes
    assert seq.job(7).duration == 134
    assert seq.job(6).hub == 1 and seq.job(8).hub == 2


def test_relocation_free_when_hubs_coincide():
    _, _, g = manual_case([(0, 0), (130, 0)], [(0, 1, 600), (1, 0, 1200)], Params())
    seq = expand_route([0, 1], g)
    assert seq.job(7).jtype is RELOCATE and seq.job(7).duration == 0


@pytest.mark.parametrize("m", [1, 2, 3, 5, 8])
def test_job_count(m):
    _, _, g = small_case(m, n=m, hubs=2, horizon=100000)
    seq = expand_route(list(range(m)), g)
    assert len(seq) == 8 * m - 3
    assert [j.index for j in seq.jobs] == list(range(1, 8 * m - 2))
    assert len(seq.hub_jobs()) == 2 * m


def test_empty_route_rejected():
    _, _, g = small_case(1, n=2)
    with pytest.raises(InfeasibleExpansionError):
        expand_route([], g)


def test_domain_example():
    _, _, g = manual_case([(0, 0), (130, 0)], [(0, 1, 600)], Params())
    seq = compute_domains(expand_route([0], g), g)
    doms = [(j.dom_lo, j.dom_hi) for j in seq.jobs]
    assert doms == [(540, 660), (570, 690), (570, 690), (690, 810), (690, 810)]


def test_domain_translation_per_task():
    for seed in range(10):
        _, _, g = small_case(seed, n=5, hubs=2, horizon=100000)
        order = sorted(range(5), key=lambda t: g.tasks[t].pickup_time)
        seq = compute_domains(expand_route(order, g), g)
        delta = g.params.delta_minutes
        for k, j in enumerate(seq.jobs):
            if j.jtype is LOAD:
                p = g.tasks[j.task].pickup_time
                assert (j.dom_lo, j.dom_hi) == (p - delta, p + delta)
                drive, unload = seq.jobs[k + 2], seq.jobs[k + 4]
                assert (drive.dom_lo, drive.dom_hi) == (j.dom_lo + j.duration, j.dom_hi + j.duration)
                assert (unload.dom_lo, unload.dom_hi) == (drive.dom_lo + drive.duration, drive.dom_hi + drive.duration)
                assert j.dom_hi - j.dom_lo == 2 * delta


def test_empty_domain_reported():
    # the second load cannot be reached before its window closes
    _, _, g = manual_case([(0, 0), (130, 0), (1000, 0)], [(0, 1, 600), (2, 0, 700)], Params())
    with pytest.raises(InfeasibleExpansionError, match="route 0"):
        compute_domains(expand_route([0, 1], g), g)


def _sample_schedule(seq, r):
    """Random schedule satisfying the chain and the task windows, or None."""
    S = []
    t = None
    for k, j in enumerate(seq.jobs):
        if j.jtype is LOAD:
            lo = j.dom_lo if t is None else max(j.dom_lo, t)
            if lo > j.dom_hi:
                return None
            t = r.randint(lo, j.dom_hi)
        elif j.jtype in (DRIVE, UNLOAD):
            if t > j.dom_hi:
                return None
            t = r.randint(max(t, j.dom_lo), j.dom_hi)
        elif j.jtype is RELOCATE:
            t = t + r.randint(0, 40)
        S.append(t)
        if j.jtype is PARK:
            continue
        t += j.duration
        # park after this job may absorb any wait, resolved by the next draw
    return S


def _within(seq, S):
    return all(j.dom_lo <= s <= j.dom_hi for j, s in zip(seq.jobs, S))


def _chain_ok(seq, S):
    for k, j in enumerate(seq.jobs[:-1]):
        end = S[k] if j.duration is None else S[k] + j.duration
        if S[k + 1] < end:
            return False
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0, 15, 60]))
def test_redundant_bounds_do_not_cut_schedules(seed, delta):
    p = Params(delta_minutes=delta)
    _, _, g = small_case(seed, n=6, hubs=3, params=p)
    plan = solve_exact(g, 2)
    if not plan.routes:
        return
    tight = expand_plan(plan, g, True)
    loose = expand_plan(plan, g, False)
    r = random.Random(seed)
    for a, b in zip(tight, loose):
        assert [j.jtype for j in a.jobs] == [j.jtype for j in b.jobs]
        for ja, jb in zip(a.jobs, b.jobs):
            assert jb.dom_lo <= ja.dom_lo and ja.dom_hi <= jb.dom_hi
            if ja.jtype not in (PARK, RELOCATE):
                assert (ja.dom_lo, ja.dom_hi) == (jb.dom_lo, jb.dom_hi)
        for _ in range(200):
            S = _sample_schedule(a, r)
            if S is None or not _chain_ok(a, S):
                continue
            assert _within(a, S) and _within(b, S)


def test_unbounded_horizon_covers_windows():
    p = Params(delta_minutes=60)
    _, _, g = manual_case([(0, 0), (130, 0)], [(0, 1, 20), (1, 0, 900)], p)
    plan = RoutePlan([[0, 1]])
    (seq,) = expand_plan(plan, g, False)
    lo = min(j.dom_lo for j in seq.jobs if j.jtype is LOAD)
    for j in seq.jobs:
        if j.jtype in (PARK, RELOCATE):
            assert (j.dom_lo, j.dom_hi) == (min(0, lo), p.horizon_minutes)


def test_initial_schedule_follows_routing_times():
    _, _, g = manual_case([(0, 0), (130, 0)], [(0, 1, 600), (1, 0, 1000)], Params())
    plan = earliest_start(RoutePlan([[0, 1]]), g)
    seq = compute_domains(expand_route([0, 1], g), g)
    S = initial_schedule(seq, plan.start_times)
    assert plan.start_times == {0: 540, 1: 940}
    assert S[:5] == [540, 570, 570, 690, 690]
    # the link parks wait at the unload hub until the next load
    assert S[5:8] == [720, 720, 720]
    assert S[8:13] == [940, 970, 970, 1090, 1090]
    assert S[13] == 1120
    assert _within(seq, S[:-1]) and _chain_ok(seq, S[:-1])


def test_jobs_csv(tmp_path):
    _, _, g = small_case(11, n=6)
    plan = earliest_start(solve_exact(g, 3), g)
    seqs = expand_plan(plan, g)
    before = [initial_schedule(s, plan.start_times) for s in seqs]
    write_jobs_csv(seqs, before, before, tmp_path / "j.csv")
    lines = (tmp_path / "j.csv").read_text().splitlines()
    assert lines[0].startswith("route,index,type,task,hub,duration,dom_lo,dom_hi")
    assert len(lines) == 1 + sum(len(s) for s in seqs)
