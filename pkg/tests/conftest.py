import math
import sys
from collections import deque

import pytest

from serverless_sched.cluster import Invocation, make_worker


def inv(i, arrival, demand, fid=0):
    return Invocation(i, fid, float(arrival), float(demand))


def stream(*jobs):
    """Invocations from (arrival, demand[, function_id]) tuples."""
    return [inv(i, *job) for i, job in enumerate(jobs)]


def loaded_workers(loads, cores=2, discipline="PS", warm=(), fid=0, slot_capacity=None):
    """Workers with the given hosted counts; ``warm`` lists ids holding an idle container for fid."""
    workers = [make_worker(discipline, i, cores, slot_capacity) for i in range(len(loads))]
    n = 10_000
    for w, load in zip(workers, loads):
        for _ in range(load):
            w.admit(Invocation(n, 999, 0.0, 1e6), 0.0)
            n += 1
    for i in warm:
        workers[i].warm_pool.setdefault(fid, deque()).append((-1, 0.0))
    return workers


def clock_tol(t):
    return max(1e-9, 8 * math.ulp(t))


@pytest.fixture
def tiny_cfg_dict(tmp_path):
    return {
        "name": "tiny",
        "cluster": {"n_workers": 2, "cores_per_worker": 2},
        "workload": {"preset": "ms-representative"},
        "functions": {"keep_alive": 600},
        "policies": ["E/H/PS", "E/LL/PS", "L"],
        "loads": [0.3, 0.7],
        "seeds": [1, 2],
        "run": {"min_time": 300, "min_completions": 0},
        "output": {"dir": str(tmp_path / "out")},
    }


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
