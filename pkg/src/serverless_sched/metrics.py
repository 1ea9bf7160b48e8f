"""Latency, slowdown, percentiles, cold starts and utilization of a finished run."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

RECORD_FIELDS = ("id", "function_id", "arrival", "dispatch", "start", "completion",
                 "service_demand", "cold_start", "worker_id")
INVOCATION_CSV_HEADER = ("id", "function_id", "arrival", "dispatch", "start", "completion",
                         "exec_time", "slowdown", "cold_start", "worker_id")
SUMMARY_FIELDS = ("policy", "load", "rate", "seed", "completions", "rejections", "rejection_rate",
                  "p50_latency", "p99_latency", "p50_slowdown", "p99_slowdown", "mean_slowdown",
                  "cold_start_rate", "avg_cores", "avg_servers")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class CompletionRecord:
    id: int
    function_id: int
    arrival: float
    dispatch: float
    start: float
    completion: float
    service_demand: float
    cold_start: bool
    worker_id: int

    @property
    def latency(self):
        return self.completion - self.arrival


def slowdown(record):
    if record.completion is None:
        raise MetricsError(f"invocation {record.id} has not completed")
    if not record.service_demand > 0:
        raise MetricsError(f"invocation {record.id} has non-positive service demand")
    return (record.completion - record.arrival) / record.service_demand


def percentile(samples, p):
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    if not 0 < p <= 100:
        raise MetricsError(f"percentile must be in (0, 100], got {p!r}")
    arr = np.asarray(samples, dtype=float)
    n = arr.size
    if n == 0:
        raise MetricsError("percentile of an empty sample")
    rank = max(1, math.ceil(p / 100.0 * n - 1e-9))
    return float(np.partition(arr, rank - 1)[rank - 1])


@dataclass
class SimReport:
    """Everything a run produced. Treat as read-only once returned."""

    columns: dict
    arrivals: int
    rejections: int
    in_flight: int
    end_time: float
    warmup_cutoff: float
    util_window: float
    util_cores: np.ndarray
    util_masks: list
    metadata: dict = field(default_factory=dict)

    @property
    def completions(self):
        return int(self.columns["id"].size)

    @property
    def latency(self):
        c = self.columns
        return c["completion"] - c["arrival"]

    @property
    def slowdown(self):
        c = self.columns
        return (c["completion"] - c["arrival"]) / c["service_demand"]

    @property
    def steady(self):
        """Mask of completions that arrived after the warm-up cutoff."""
        return self.columns["arrival"] >= self.warmup_cutoff

    def records(self):
        c = self.columns
        for i in range(self.completions):
            yield CompletionRecord(int(c["id"][i]), int(c["function_id"][i]), float(c["arrival"][i]),
                                   float(c["dispatch"][i]), float(c["start"][i]),
                                   float(c["completion"][i]), float(c["service_demand"][i]),
                                   bool(c["cold_start"][i]), int(c["worker_id"][i]))

    @property
    def percentiles(self):
        mask = self.steady
        out = {}
        for name, values in (("latency", self.latency[mask]), ("slowdown", self.slowdown[mask])):
            for p in (50, 99):
                out[f"p{p}_{name}"] = percentile(values, p) if values.size else math.nan
        return out

    @property
    def cold_start_rate(self):
        return cold_start_rate(self)

    @property
    def rejection_rate(self):
        return self.rejections / self.arrivals if self.arrivals else 0.0

    def mean_utilization(self):
        """(average busy cores, average servers used) over post-warm-up windows."""
        if not len(self.util_masks):
            return 0.0, 0.0
        first = int(math.ceil(self.warmup_cutoff / self.util_window - 1e-9))
        cores = self.util_cores[first:]
        masks = self.util_masks[first:]
        if not len(masks):
            return 0.0, 0.0
        servers = np.fromiter((m.bit_count() for m in masks), dtype=float, count=len(masks))
        return float(cores.mean()), float(servers.mean())


def cold_start_rate(report):
    mask = report.steady
    n = int(mask.sum())
    if n == 0:
        raise MetricsError("cold-start rate of a run with no (post-warm-up) completions")
    return float(report.columns["cold_start"][mask].sum()) / n


def utilization(report, window=None):
    """Per-window (cores_busy_avg, servers_used) series.

    ``window`` must be a whole multiple of the run's base sampling window.
    """
    base = report.util_window
    window = base if window is None else window
    if not window > 0:
        raise MetricsError("window must be > 0")
    k = window / base
    if abs(k - round(k)) > 1e-9 or round(k) < 1:
        raise MetricsError(f"window {window} is not a multiple of the sampled window {base}")
    k = int(round(k))
    n = len(report.util_masks) // k
    out = []
    for j in range(n):
        cores = float(report.util_cores[j * k:(j + 1) * k].mean())
        mask = 0
        for m in report.util_masks[j * k:(j + 1) * k]:
            mask |= m
        out.append((cores, mask.bit_count()))
    return out


def summary_row(report, policy, load, rate, seed):
    n = int(report.steady.sum())
    pct = report.percentiles
    avg_cores, avg_servers = report.mean_utilization()
    return {
        "policy": str(policy),
        "load": load,
        "rate": rate,
        "seed": seed,
        "completions": n,
        "rejections": report.rejections,
        "rejection_rate": report.rejection_rate,
        "p50_latency": pct["p50_latency"],
        "p99_latency": pct["p99_latency"],
        "p50_slowdown": pct["p50_slowdown"],
        "p99_slowdown": pct["p99_slowdown"],
        "mean_slowdown": float(report.slowdown[report.steady].mean()) if n else math.nan,
        "cold_start_rate": cold_start_rate(report) if n else math.nan,
        "avg_cores": avg_cores,
        "avg_servers": avg_servers,
    }


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_invocations_csv(report, path):
    c = report.columns
    sd = report.slowdown
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INVOCATION_CSV_HEADER)
        for i in range(report.completions):
            w.writerow([int(c["id"][i]), int(c["function_id"][i]), repr(float(c["arrival"][i])),
                        repr(float(c["dispatch"][i])), repr(float(c["start"][i])),
                        repr(float(c["completion"][i])), repr(float(c["service_demand"][i])),
                        repr(float(sd[i])), int(bool(c["cold_start"][i])), int(c["worker_id"][i])])


def write_summary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in SUMMARY_FIELDS])


def read_summary_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
