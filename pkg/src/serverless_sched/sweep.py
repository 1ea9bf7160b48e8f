"""Policy x load x seed sweeps over independent simulations."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .cluster import Invocation
from .engine import Simulation
from .metrics import summary_row, write_invocations_csv, write_summary_csv
from .workload import generate, load_fraction_to_rate, load_trace

log = logging.getLogger(__name__)

AGGREGATE_METRICS = ("p50_slowdown", "p99_slowdown", "p50_latency", "p99_latency",
                     "cold_start_rate", "avg_cores", "avg_servers", "rejection_rate")


@dataclass(frozen=True)
class Point:
    policy_index: int
    load_index: int
    seed_index: int
    policy: str
    load: float
    seed: int

    @property
    def key(self):
        return (self.policy_index, self.load_index, self.seed_index)

    @property
    def tag(self):
        return f"{self.policy.replace('/', '-')}_load{self.load:g}_seed{self.seed}"


def points(cfg):
    return [Point(i, j, k, p, load, seed)
            for i, p in enumerate(cfg.policies)
            for j, load in enumerate(cfg.loads)
            for k, seed in enumerate(cfg.seeds)]


def arrival_rate(cfg, load):
    if cfg.load_unit == "rps":
        return load
    return load_fraction_to_rate(load, cfg.cluster.total_cores, cfg.workload.exec_mean())


def horizon(cfg, rate):
    """Simulated time long enough for both run-length minimums (in expectation)."""
    r = cfg.run
    need = r.min_completions / rate / (1.0 - r.warmup_fraction) if r.min_completions else 0.0
    return max(r.min_time, need)


def _trace_stream(path, scale):
    for inv in load_trace(path):
        yield Invocation(inv.id, inv.function_id, inv.arrival / scale, inv.service_demand)


def run_point(cfg, point):
    """Run one simulation; returns (summary row, report)."""
    if cfg.workload.trace is not None:
        # for traces the load scales the arrival rate of the recorded stream
        rate = float("nan")
        stream = _trace_stream(cfg.workload.trace, point.load)
        max_time = None
    else:
        rate = arrival_rate(cfg, point.load)
        max_time = horizon(cfg, rate)
        stream = generate(cfg.workload.spec(rate, None, point.seed))
    sim = Simulation(point.policy, cfg.cluster.n_workers, cfg.cluster.cores_per_worker, stream,
                     slot_capacity=cfg.cluster.slots(), seed=point.seed,
                     default_profile=cfg.functions.profile(),
                     warmup_fraction=cfg.run.warmup_fraction, util_window=cfg.run.util_window,
                     hybrid_order=cfg.run.hybrid_order, overflow=cfg.run.overflow)
    report = sim.run(max_time=max_time)
    report.metadata["config_sha256"] = cfg.digest()
    row = summary_row(report, sim.policy, point.load, rate, point.seed)
    return row, report


def _run_point_job(args):
    cfg, point, out_dir = args
    row, report = run_point(cfg, point)
    if out_dir is not None:
        write_invocations_csv(report, Path(out_dir) / f"invocations_{point.tag}.csv")
    return point.key, row


def run_sweep(cfg, parallelism=1, invocation_dir=None):
    """Run every (policy, load, seed) point; rows come back in key order."""
    jobs = [(cfg, p, invocation_dir) for p in points(cfg)]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_run_point_job, jobs))
    else:
        results = []
        for job in jobs:
            log.info("running %s load=%s seed=%s", job[1].policy, job[1].load, job[1].seed)
            results.append(_run_point_job(job))
    results.sort(key=lambda kv: kv[0])
    return [row for _, row in results]


def aggregate(rows):
    """min/mean/max over seeds for each (policy, load)."""
    groups = {}
    for row in rows:
        groups.setdefault((row["policy"], row["load"]), []).append(row)
    out = []
    for (policy, load), group in groups.items():
        agg = {"policy": policy, "load": load, "seeds": len(group)}
        for m in AGGREGATE_METRICS:
            vals = [float(r[m]) for r in group]
            agg[f"{m}_min"] = min(vals)
            agg[f"{m}_mean"] = sum(vals) / len(vals)
            agg[f"{m}_max"] = max(vals)
        out.append(agg)
    return out


def run_experiment(cfg, out_dir=None, parallelism=1):
    """Run a whole config and write summary.csv, aggregate.csv and manifest.json."""
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    inv_dir = None
    if cfg.per_invocation:
        inv_dir = out / "invocations"
        inv_dir.mkdir(exist_ok=True)
    rows = run_sweep(cfg, parallelism, inv_dir)
    write_summary_csv(rows, out / "summary.csv")
    agg = aggregate(rows)
    if agg:
        with open(out / "aggregate.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            keys = list(agg[0])
            w.writerow(keys)
            for a in agg:
                w.writerow([repr(a[k]) if isinstance(a[k], float) else a[k] for k in keys])
    manifest = {
        "tool": "serverless_sched",
        "tool_version": __version__,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seeds": list(cfg.seeds),
        "points": len(rows),
        "warmup_fraction": cfg.run.warmup_fraction,
        "run_length": {"min_time": cfg.run.min_time, "min_completions": cfg.run.min_completions},
        "percentiles": "nearest-rank over completions arriving after the warm-up cutoff",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return rows
