"""Invocation streams: open-loop Poisson generators, named presets, CSV traces."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from itertools import accumulate

from .cluster import Invocation
from .simcore import Rng, sample_exponential, sample_lognormal

TRACE_HEADER = ("function_id", "arrival_time_s", "exec_time_s", "memory_mb")


class WorkloadError(ValueError):
    pass


class TraceError(WorkloadError):
    pass


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def validate(self):
        if not self.sigma > 0:
            raise WorkloadError(f"exec_time.sigma: must be > 0, got {self.sigma!r}")

    @property
    def mean(self):
        return math.exp(self.mu + self.sigma ** 2 / 2)

    def sample(self, rng):
        return sample_lognormal(rng, self.mu, self.sigma)


@dataclass(frozen=True)
class Exponential:
    mean: float

    def validate(self):
        if not self.mean > 0:
            raise WorkloadError(f"exec_time.mean: must be > 0, got {self.mean!r}")

    def sample(self, rng):
        return sample_exponential(rng, self.mean)


@dataclass(frozen=True)
class PerFunction:
    """A separate execution-time distribution per function id."""

    dists: dict

    def validate(self):
        if not self.dists:
            raise WorkloadError("exec_time: per-function map is empty")
        for fid, d in self.dists.items():
            try:
                d.validate()
            except WorkloadError as exc:
                raise WorkloadError(f"exec_time[{fid}]: {exc}") from None

    def sample_for(self, function_id, rng):
        return self.dists[function_id].sample(rng)


@dataclass(frozen=True)
class WorkloadSpec:
    n_functions: int
    popularity: tuple
    rate: float
    exec_time: object
    duration: float | None = None
    seed: int = 0
    # mean used to turn a load fraction into a rate; defaults to the analytic mean
    exec_mean: float | None = field(default=None, compare=False)

    def validate(self):
        if self.n_functions < 1:
            raise WorkloadError("n_functions: must be >= 1")
        if len(self.popularity) != self.n_functions:
            raise WorkloadError(
                f"popularity: length {len(self.popularity)} != n_functions {self.n_functions}")
        if any(p < 0 for p in self.popularity):
            raise WorkloadError("popularity: entries must be non-negative")
        if abs(sum(self.popularity) - 1.0) > 1e-9:
            raise WorkloadError(f"popularity: must sum to 1 (got {sum(self.popularity)!r})")
        if not self.rate > 0:
            raise WorkloadError(f"rate: must be > 0, got {self.rate!r}")
        if self.duration is not None and not self.duration > 0:
            raise WorkloadError("duration: must be > 0")
        if isinstance(self.exec_time, PerFunction):
            missing = set(range(self.n_functions)) - set(self.exec_time.dists)
            if missing:
                raise WorkloadError(f"exec_time: no distribution for functions {sorted(missing)[:5]}")
        self.exec_time.validate()


def exec_mean_of(dist):
    if isinstance(dist, LogNormal):
        return dist.mean
    if isinstance(dist, Exponential):
        return dist.mean
    raise WorkloadError(f"no closed-form mean for {dist!r}; pass exec_mean explicitly")


def skewed_popularity(n_functions, hot_share):
    if n_functions == 1:
        return (1.0,)
    rest = (1.0 - hot_share) / (n_functions - 1)
    return (hot_share,) + (rest,) * (n_functions - 1)


def balanced_popularity(n_functions):
    return (1.0 / n_functions,) * n_functions


AZURE_EXEC = LogNormal(-0.38, 2.36)

PRESETS = {
    "sim-default": dict(n_functions=50, popularity=skewed_popularity(50, 0.98), exec_time=AZURE_EXEC),
    "ms-representative": dict(n_functions=50, popularity=skewed_popularity(50, 0.90), exec_time=AZURE_EXEC),
    "single-function": dict(n_functions=1, popularity=(1.0,), exec_time=AZURE_EXEC),
    "multi-balanced": dict(n_functions=50, popularity=balanced_popularity(50), exec_time=AZURE_EXEC),
    "homogeneous-exec": dict(n_functions=50, popularity=skewed_popularity(50, 0.90),
                             exec_time=Exponential(8.9)),
}


def preset(name, rate, duration=None, seed=0):
    try:
        base = PRESETS[name]
    except KeyError:
        raise WorkloadError(f"unknown workload preset {name!r}; known: {sorted(PRESETS)}") from None
    return WorkloadSpec(rate=rate, duration=duration, seed=seed, **base)


def load_fraction_to_rate(load, total_cores, exec_mean):
    """Arrival rate (invocations/s) offering ``load`` of the aggregate core capacity."""
    if not load > 0:
        raise WorkloadError("load must be > 0")
    if not exec_mean > 0:
        raise WorkloadError("exec_mean must be > 0")
    return load * total_cores / exec_mean


def generate(spec):
    """Yield invocations of an open-loop Poisson stream, in arrival order.

    Inter-arrival gaps, function choice and execution time come from three
    independent sub-streams of ``spec.seed``.
    """
    spec.validate()
    gaps = Rng(spec.seed, "arrivals")
    picks = Rng(spec.seed, "function-choice")
    sizes = Rng(spec.seed, "exec-times")
    cdf = list(accumulate(spec.popularity))
    cdf[-1] = 1.0
    last = len(cdf) - 1
    mean_gap = 1.0 / spec.rate
    dist = spec.exec_time
    per_function = isinstance(dist, PerFunction)
    horizon = spec.duration if spec.duration is not None else math.inf
    t = 0.0
    i = 0
    while True:
        t += mean_gap * gaps.std_exponential()
        if t > horizon:
            return
        fid = 0 if last == 0 else min(bisect.bisect_right(cdf, picks.random()), last)
        demand = dist.sample_for(fid, sizes) if per_function else dist.sample(sizes)
        yield Invocation(i, fid, t, demand)
        i += 1


@dataclass(frozen=True)
class TraceRecord:
    function_id: int
    arrival_time: float
    exec_time: float
    memory_mb: int = 256


def read_trace(path):
    """Parse a normalized trace CSV into TraceRecords (validated)."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return records
        header = [h.strip() for h in header]
        if tuple(header[:3]) != TRACE_HEADER[:3] or len(header) > 4 or (
                len(header) == 4 and header[3] != TRACE_HEADER[3]):
            raise TraceError(f"{path}:1: expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")
        last_t = -math.inf
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) not in (3, 4):
                raise TraceError(f"{path}:{line}: expected 3 or 4 fields, got {len(row)}")
            try:
                fid = int(row[0])
                t = float(row[1])
                ex = float(row[2])
                mem = int(row[3]) if len(row) == 4 and row[3].strip() else 256
            except ValueError as exc:
                raise TraceError(f"{path}:{line}: {exc}") from None
            if fid < 0:
                raise TraceError(f"{path}:{line}: function_id must be >= 0")
            if not math.isfinite(t) or t < 0:
                raise TraceError(f"{path}:{line}: arrival_time_s must be finite and >= 0")
            if t < last_t:
                raise TraceError(f"{path}:{line}: arrival times must be non-decreasing ({t} < {last_t})")
            if not (ex > 0 and math.isfinite(ex)):
                raise TraceError(f"{path}:{line}: exec_time_s must be > 0")
            if mem <= 0:
                raise TraceError(f"{path}:{line}: memory_mb must be > 0")
            last_t = t
            records.append(TraceRecord(fid, t, ex, mem))
    return records


def load_trace(path):
    """Invocation stream replaying a trace file in file order."""
    return [Invocation(i, r.function_id, r.arrival_time, r.exec_time)
            for i, r in enumerate(read_trace(path))]


def write_trace(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([r.function_id, repr(r.arrival_time), repr(r.exec_time), r.memory_mb])
