import math
from itertools import islice

import numpy as np
import pytest

from serverless_sched.engine import simulate
from serverless_sched.workload import (AZURE_EXEC, PRESETS, Exponential, LogNormal, PerFunction,
                                       TraceError, TraceRecord, WorkloadError, WorkloadSpec,
                                       generate, load_fraction_to_rate, load_trace, preset,
                                       read_trace, write_trace)


def _draw(spec, n):
    return list(islice(generate(spec), n))


def _shares(name, n=1_000_000):
    invs = _draw(preset(name, rate=10.0, seed=1), n)
    return np.bincount([i.function_id for i in invs], minlength=PRESETS[name]["n_functions"]) / n


def test_ms_representative_share():
    s = _shares("ms-representative")
    assert abs(s[0] - 0.90) <= 0.005
    assert abs(s[0] - 0.90) <= 3 * math.sqrt(0.9 * 0.1 / 1e6)
    assert PRESETS["ms-representative"]["popularity"][1] == pytest.approx(0.10 / 49)


def test_sim_default_share():
    assert PRESETS["sim-default"]["popularity"][0] == 0.98
    s = _shares("sim-default", 200_000)
    assert abs(s[0] - 0.98) <= 3 * math.sqrt(0.98 * 0.02 / 200_000)


def test_single_function_and_balanced():
    assert PRESETS["single-function"]["popularity"] == (1.0,)
    p = PRESETS["multi-balanced"]["popularity"]
    assert len(p) == 50 and all(x == pytest.approx(0.02) for x in p)
    s = _shares("multi-balanced", 200_000)
    sigma = math.sqrt(0.02 * 0.98 / 200_000)
    assert np.all(np.abs(s - 0.02) <= 4 * sigma)


def test_homogeneous_exec_preset():
    assert PRESETS["homogeneous-exec"]["exec_time"] == Exponential(8.9)
    assert PRESETS["homogeneous-exec"]["popularity"][0] == 0.90


def test_lognormal_mean_and_rate():
    assert AZURE_EXEC.mean == pytest.approx(math.exp(-0.38 + 2.36 ** 2 / 2))
    assert AZURE_EXEC.mean == pytest.approx(11.1, abs=0.05)
    assert load_fraction_to_rate(0.5, 48, 11.1) == pytest.approx(2.16, abs=0.005)
    assert load_fraction_to_rate(1.0, 1, 1.0) == 1.0
    with pytest.raises(WorkloadError):
        load_fraction_to_rate(0, 1, 1.0)


def test_poisson_rate_and_cv():
    invs = _draw(WorkloadSpec(1, (1.0,), 4.0, Exponential(1.0), seed=2), 1_000_000)
    t = np.array([i.arrival for i in invs])
    gaps = np.diff(np.concatenate(([0.0], t)))
    assert abs(len(t) / t[-1] / 4.0 - 1) <= 0.01
    assert abs(gaps.std() / gaps.mean() - 1) <= 0.02
    assert (np.diff(t) >= 0).all()


def test_duration_bounds_stream():
    invs = list(generate(WorkloadSpec(1, (1.0,), 2.0, Exponential(1.0), duration=100.0, seed=1)))
    assert invs and invs[-1].arrival <= 100.0
    assert 120 < len(invs) < 280


def test_same_seed_same_stream():
    a = _draw(preset("sim-default", 3.0, seed=5), 2000)
    b = _draw(preset("sim-default", 3.0, seed=5), 2000)
    c = _draw(preset("sim-default", 3.0, seed=6), 2000)
    key = lambda xs: [(i.function_id, i.arrival, i.service_demand) for i in xs]
    assert key(a) == key(b)
    assert key(a) != key(c)


def test_stream_independent_of_consuming_policy():
    reps = [simulate(p, 4, 2, generate(preset("sim-default", 0.5, seed=3)), max_time=2000, seed=3)
            for p in ("E/LL/PS", "E/R/FCFS", "L")]
    seen = []
    for r in reps:
        c = r.columns
        order = np.argsort(c["id"])
        seen.append({int(i): (a, d) for i, a, d in
                     zip(c["id"][order], c["arrival"][order], c["service_demand"][order])})
    common = set(seen[0]) & set(seen[1]) & set(seen[2])
    assert len(common) > 500
    assert all(seen[0][i] == seen[1][i] == seen[2][i] for i in common)


def test_per_function_exec_times():
    dist = PerFunction({0: Exponential(1.0), 1: Exponential(100.0)})
    invs = _draw(WorkloadSpec(2, (0.5, 0.5), 1.0, dist, seed=1), 20_000)
    small = np.mean([i.service_demand for i in invs if i.function_id == 0])
    big = np.mean([i.service_demand for i in invs if i.function_id == 1])
    assert small == pytest.approx(1.0, rel=0.05) and big == pytest.approx(100.0, rel=0.05)


@pytest.mark.parametrize("kwargs, field", [
    (dict(n_functions=2, popularity=(0.5, 0.6)), "popularity"),
    (dict(n_functions=2, popularity=(1.0,)), "popularity"),
    (dict(n_functions=1, popularity=(1.0,), rate=0.0), "rate"),
    (dict(n_functions=1, popularity=(1.0,), exec_time=LogNormal(0, 0)), "sigma"),
    (dict(n_functions=0, popularity=()), "n_functions"),
])
def test_spec_validation_names_field(kwargs, field):
    base = dict(rate=1.0, exec_time=Exponential(1.0))
    base.update(kwargs)
    with pytest.raises(WorkloadError, match=field):
        next(generate(WorkloadSpec(**base)))


# --- traces ------------------------------------------------------------------

def _write(tmp_path, text):
    p = tmp_path / "t.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_trace_empty(tmp_path):
    assert load_trace(_write(tmp_path, "")) == []
    assert load_trace(_write(tmp_path, "function_id,arrival_time_s,exec_time_s,memory_mb\n")) == []


def test_trace_three_records(tmp_path):
    p = _write(tmp_path, "function_id,arrival_time_s,exec_time_s,memory_mb\n"
                         "0,0.5,1.25,128\n3,0.5,0.1,\n1,2.0,3.0,512\n")
    invs = load_trace(p)
    assert [(i.function_id, i.arrival, i.service_demand) for i in invs] == \
        [(0, 0.5, 1.25), (3, 0.5, 0.1), (1, 2.0, 3.0)]
    assert [r.memory_mb for r in read_trace(p)] == [128, 256, 512]


@pytest.mark.parametrize("row, msg", [
    ("0,1.0,0", "exec_time_s"),
    ("0,1.0,-2", "exec_time_s"),
    ("0,abc,1", "could not convert"),
    ("0,1.0", "fields"),
    ("0,0.5,1", "non-decreasing"),
])
def test_trace_bad_line_named(tmp_path, row, msg):
    p = _write(tmp_path, "function_id,arrival_time_s,exec_time_s\n0,0.9,1\n" + row + "\n")
    with pytest.raises(TraceError, match=f"t.csv:3: .*{msg}"):
        read_trace(p)


def test_trace_bad_header(tmp_path):
    with pytest.raises(TraceError, match=":1:"):
        read_trace(_write(tmp_path, "fid,t,x\n0,1,1\n"))


def test_trace_roundtrip(tmp_path):
    recs = [TraceRecord(0, 0.1, 0.3), TraceRecord(2, 0.7, 1.0 / 3.0, 1024)]
    p = tmp_path / "r.csv"
    write_trace(p, recs)
    assert read_trace(p) == recs


def test_trace_replay_in_engine(tmp_path):
    p = _write(tmp_path, "function_id,arrival_time_s,exec_time_s\n0,0,1\n0,0.5,1\n1,3,2\n")
    rep = simulate("E/LL/PS", 1, 2, load_trace(p), warmup_fraction=0)
    assert rep.completions == 3
    assert rep.columns["completion"].tolist() == [1.0, 1.5, 5.0]
