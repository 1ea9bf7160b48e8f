import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import clock_tol, inv, stream
from serverless_sched.cluster import (Admission, FCFSWorker, FunctionProfile, PSWorker,
                                      SRPTWorker, load_of, make_worker)
from serverless_sched.engine import Simulation, simulate
from serverless_sched.simcore import SimulationError


# --- admit -------------------------------------------------------------------

def test_admit_warm_and_cold():
    w = PSWorker(0, 2)
    a = inv(1, 0, 1.0, fid=7)
    assert w.admit(a, 0.0) is Admission.STARTED_COLD
    assert a.cold_start
    w.release(1, 1.0)
    b = inv(2, 1.0, 1.0, fid=7)
    assert w.admit(b, 1.0) is Admission.STARTED_WARM
    assert not b.cold_start


def test_fcfs_queues_behind_running():
    w = FCFSWorker(0, 1)
    assert w.admit(inv(1, 0, 2.0), 0.0) is Admission.STARTED_COLD
    b = inv(2, 0.5, 1.0)
    assert w.admit(b, 0.5) is Admission.QUEUED
    assert b.start is None
    assert w.next_departure == (2.0, 1)
    w.release(1, 2.0)
    assert b.start == 2.0
    assert w.next_departure == (3.0, 2)


def test_admit_full_worker_aborts():
    w = PSWorker(0, 1, slot_capacity=2)
    w.admit(inv(1, 0, 5), 0.0)
    w.admit(inv(2, 0, 5), 0.0)
    with pytest.raises(SimulationError, match="full"):
        w.admit(inv(3, 0, 5), 0.0)


def test_admit_twice_aborts():
    a = inv(1, 0, 5)
    PSWorker(0, 1).admit(a, 0.0)
    with pytest.raises(SimulationError):
        PSWorker(1, 1).admit(a, 0.0)


def test_cold_penalty_is_extra_work_not_demand():
    w = PSWorker(0, 1)
    a = inv(1, 0, 1.0)
    w.admit(a, 0.0, cold_start_penalty=0.5)
    assert a.work == 1.5 and a.service_demand == 1.0
    assert w.next_departure == (1.5, 1)


# --- rates -------------------------------------------------------------------

def test_ps_three_on_two_cores():
    w = PSWorker(0, 2)
    for i in range(3):
        w.admit(inv(i, 0, 10.0), 0.0)
    w.advance_then_rebalance(1.0)
    w.sync_remaining(1.0)
    for a in w.hosted.values():
        assert a.remaining_work == pytest.approx(10.0 - 2.0 / 3.0, abs=1e-12)


def test_ps_two_on_two_cores_full_rate():
    w = PSWorker(0, 2)
    w.admit(inv(0, 0, 3.0), 0.0)
    w.admit(inv(1, 0, 4.0), 0.0)
    assert w.rate == 1.0
    assert w.next_departure == (3.0, 0)


def test_srpt_runs_shortest():
    w = SRPTWorker(0, 1)
    w.admit(inv(0, 0, 5.0), 0.0)
    w.admit(inv(1, 0, 0.2), 0.0)
    assert w.next_departure == (0.2, 1)


def test_oracle_remaining_examples():
    from serverless_sched.policies import oracle_remaining
    w = SRPTWorker(0, 1)
    a = inv(0, 0, 5.0)
    w.admit(a, 0.0)
    assert oracle_remaining(a) == 5.0
    w.advance_then_rebalance(1.0)
    w.sync_remaining(1.0)
    assert oracle_remaining(a) == 4.0
    assert w.next_departure[0] - 1.0 == oracle_remaining(a)


def test_head_of_line_fcfs_91():
    rep = simulate("E/LL/FCFS", 1, 1, stream((0, 10), (1, 0.1)), warmup_fraction=0)
    b = list(rep.records())[1]
    assert b.completion == 10.1
    assert rep.slowdown[1] == pytest.approx(91.0, rel=1e-12)


def test_head_of_line_ps_2():
    rep = simulate("E/LL/PS", 1, 1, stream((0, 10), (1, 0.1)), warmup_fraction=0)
    b = next(r for r in rep.records() if r.id == 1)
    assert b.completion == pytest.approx(1.2, abs=1e-12)
    assert rep.slowdown[rep.columns["id"] == 1][0] == pytest.approx(2.0, rel=1e-12)
    a = next(r for r in rep.records() if r.id == 0)
    assert a.completion == pytest.approx(10.1, abs=1e-12)


# --- release / warm pool -----------------------------------------------------

def test_release_parks_warm_container():
    w = PSWorker(0, 1)
    w.admit(inv(0, 0, 1.0, fid=3), 0.0)
    assert w.warm_count(3) == 0
    w.release(0, 1.0)
    assert w.warm_count(3) == 1


def test_two_releases_then_admit():
    w = PSWorker(0, 2)
    w.admit(inv(0, 0, 1.0, fid=3), 0.0)
    w.admit(inv(1, 0, 1.0, fid=3), 0.0)
    w.release(0, 1.0)
    w.release(1, 1.0)
    assert w.admit(inv(2, 1, 1.0, fid=3), 1.0) is Admission.STARTED_WARM
    assert w.warm_count(3) == 1
    assert w.containers_reused <= w.containers_created


def test_release_not_hosted_aborts():
    with pytest.raises(SimulationError):
        PSWorker(0, 1).release(5, 0.0)


def test_release_with_work_left_aborts():
    w = PSWorker(0, 1)
    w.admit(inv(0, 0, 1.0), 0.0)
    with pytest.raises(SimulationError, match="remaining work"):
        w.release(0, 0.5)


def _keep_alive_run(second_arrival):
    prof = FunctionProfile(0, keep_alive=600.0)
    rep = simulate("E/LL/PS", 1, 1, stream((0, 1.0), (second_arrival, 1.0)),
                   profiles={0: prof}, warmup_fraction=0)
    return rep.columns["cold_start"].tolist()


def test_keep_alive_expiry():
    assert _keep_alive_run(500.0) == [True, False]
    # container released at t=1 expires at t=601
    assert _keep_alive_run(600.5) == [True, False]
    assert _keep_alive_run(601.5) == [True, True]


def test_expired_container_not_reused_after_reuse():
    w = PSWorker(0, 1)
    w.admit(inv(0, 0, 1.0), 0.0)
    _, cid = w.release(0, 1.0)
    w.admit(inv(1, 2, 1.0), 2.0)
    assert w.expire(0, cid) is False


def test_load_of():
    w = FCFSWorker(0, 3)
    assert load_of(w) == 0
    for i in range(5):
        w.admit(inv(i, 0, 1.0 + i), 0.0)
    assert load_of(w) == 5 and w.running_count() == 3
    w.release(0, 1.0)
    assert load_of(w) == 4


def test_make_worker_default_capacity():
    w = make_worker("PS", 0, 12)
    assert w.slot_capacity == 96
    with pytest.raises(ValueError):
        make_worker("LIFO", 0, 1)


def test_profile_validation():
    with pytest.raises(ValueError):
        FunctionProfile(0, memory_mb=0)
    with pytest.raises(ValueError):
        FunctionProfile(0, keep_alive=0)
    with pytest.raises(ValueError):
        FunctionProfile(0, cold_start_penalty=-1)


# --- properties --------------------------------------------------------------

jobs = st.lists(st.tuples(st.floats(0, 50), st.floats(0.01, 20), st.integers(0, 3)),
                min_size=1, max_size=40)


def _run_jobs(policy, js, cores=2, n_workers=2, penalty=0.0):
    js = sorted(js)
    prof = FunctionProfile(-1, cold_start_penalty=penalty)
    sim = Simulation(policy, n_workers, cores, stream(*js), slot_capacity=1000,
                     default_profile=prof, warmup_fraction=0)
    rep = sim.run()
    return sim, rep


@settings(max_examples=60, deadline=None)
@given(jobs, st.sampled_from(["E/LL/PS", "E/R/FCFS", "E/LOC/SRPT", "L", "E/H/PS"]),
       st.sampled_from([0.0, 0.7]))
def test_work_conservation(js, policy, penalty):
    sim, rep = _run_jobs(policy, js, penalty=penalty)
    for w in sim.workers:
        assert w.busy_integral == pytest.approx(w.completed_work, rel=1e-6, abs=1e-9)
    served = sum(w.completed_work for w in sim.workers)
    expected = rep.columns["service_demand"].sum() + penalty * rep.columns["cold_start"].sum()
    assert served == pytest.approx(expected, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(jobs, st.sampled_from(["E/LL/PS", "E/R/FCFS", "E/LL/SRPT", "L"]))
def test_rate_bound_and_timestamps(js, policy):
    _, rep = _run_jobs(policy, js)
    c = rep.columns
    assert (c["arrival"] <= c["dispatch"]).all()
    assert (c["dispatch"] <= c["start"]).all()
    assert (c["start"] <= c["completion"]).all()
    tol = np.array([clock_tol(t) for t in c["completion"]])
    ran = c["completion"] - c["start"]
    assert (ran >= c["service_demand"] - tol).all()
    if policy in ("E/R/FCFS", "L"):
        assert (c["completion"] == c["start"] + c["service_demand"]).all()


@settings(max_examples=40, deadline=None)
@given(jobs)
def test_fcfs_completions_in_start_order(js):
    _, rep = _run_jobs("E/LL/FCFS", js, cores=1)
    c = rep.columns
    for wid in np.unique(c["worker_id"]):
        m = c["worker_id"] == wid
        order = np.argsort(c["completion"][m], kind="stable")
        assert (np.diff(c["start"][m][order]) >= 0).all()


# --- SRPT against a time-stepped oracle ---------------------------------------

def srpt_time_stepped(jobs, cores):
    """1 ms steps; every step the ``cores`` smallest-remaining jobs (ties by arrival) run."""
    remaining = {}
    done = {}
    started = {}
    t = 0
    while len(done) < len(jobs):
        for i, (a, d) in enumerate(jobs):
            if a == t:
                remaining[i] = d
        live = sorted(remaining, key=lambda i: (remaining[i], i))
        for i in live[:cores]:
            started.setdefault(i, t)
            remaining[i] -= 1
            if remaining[i] == 0:
                del remaining[i]
                done[i] = t + 1
        t += 1
    return done, started


def test_srpt_matches_time_stepped_oracle():
    rnd = random.Random(2024)
    for _ in range(20):
        cores = rnd.choice((1, 2))
        js = sorted((rnd.randrange(0, 3000), rnd.randrange(1, 3000)) for _ in range(5))
        rep = simulate("E/LL/SRPT", 1, cores, stream(*js), slot_capacity=100, warmup_fraction=0)
        done, started = srpt_time_stepped(js, cores)
        got = {int(i): (float(c), float(s)) for i, c, s in
               zip(rep.columns["id"], rep.columns["completion"], rep.columns["start"])}
        assert got == {i: (float(done[i]), float(started[i])) for i in done}, js
