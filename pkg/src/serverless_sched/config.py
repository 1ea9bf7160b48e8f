"""Experiment configuration files (YAML) and their validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .cluster import FunctionProfile
from .policies import Policy, PolicyError
from .workload import (PRESETS, Exponential, LogNormal, WorkloadError, WorkloadSpec,
                       balanced_popularity, exec_mean_of, skewed_popularity)


class ConfigError(ValueError):
    """Invalid experiment configuration. The message names the offending field."""


@dataclass
class ClusterConfig:
    n_workers: int = 4
    cores_per_worker: int = 12
    # "8x_cores" or a fixed number of invocations per worker
    slot_capacity: object = "8x_cores"

    @property
    def total_cores(self):
        return self.n_workers * self.cores_per_worker

    def slots(self):
        if self.slot_capacity == "8x_cores":
            return 8 * self.cores_per_worker
        return int(self.slot_capacity)


@dataclass
class WorkloadConfig:
    preset: str | None = None
    trace: str | None = None
    n_functions: int | None = None
    popularity: object = None
    exec_time: dict | None = None

    def spec(self, rate, duration, seed):
        if self.preset is not None:
            base = dict(PRESETS[self.preset])
        else:
            base = {"n_functions": self.n_functions,
                    "popularity": _popularity(self.popularity, self.n_functions),
                    "exec_time": _exec_time(self.exec_time)}
        return WorkloadSpec(rate=rate, duration=duration, seed=seed, **base)

    def exec_mean(self):
        if self.preset is not None:
            return exec_mean_of(PRESETS[self.preset]["exec_time"])
        return exec_mean_of(_exec_time(self.exec_time))


@dataclass
class FunctionsConfig:
    memory_mb: int = 256
    cold_start_penalty: float = 0.0
    keep_alive: float = math.inf

    def profile(self):
        return FunctionProfile(-1, self.memory_mb, self.cold_start_penalty, self.keep_alive)


@dataclass
class RunConfig:
    min_time: float = 7200.0
    min_completions: int = 100_000
    warmup_fraction: float = 0.1
    util_window: float = 1.0
    overflow: str = "reject"
    hybrid_order: str = "id"


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    functions: FunctionsConfig = field(default_factory=FunctionsConfig)
    policies: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    load_unit: str = "fraction"
    seeds: list = field(default_factory=lambda: [1])
    run: RunConfig = field(default_factory=RunConfig)
    out_dir: str = "results"
    per_invocation: bool = False

    def parsed_policies(self):
        return [Policy.parse(p) for p in self.policies]

    def to_dict(self):
        d = asdict(self)
        d["functions"]["keep_alive"] = _inf_out(d["functions"]["keep_alive"])
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _inf_out(x):
    return "inf" if x == math.inf else x


def _popularity(pop, n):
    if n is None or n < 1:
        raise ConfigError("workload.n_functions: required positive integer for inline workloads")
    if pop is None or pop == "balanced":
        return balanced_popularity(n)
    if isinstance(pop, dict):
        if set(pop) != {"hot_share"}:
            raise ConfigError("workload.popularity: expected {hot_share: x}, a list, or 'balanced'")
        return skewed_popularity(n, float(pop["hot_share"]))
    if isinstance(pop, list):
        return tuple(float(p) for p in pop)
    raise ConfigError(f"workload.popularity: unsupported value {pop!r}")


def _exec_time(d):
    if not isinstance(d, dict) or len(d) != 1:
        raise ConfigError("workload.exec_time: expected {lognormal: {mu, sigma}} or {exponential: {mean}}")
    (kind, params), = d.items()
    try:
        if kind == "lognormal":
            return LogNormal(float(params["mu"]), float(params["sigma"]))
        if kind == "exponential":
            return Exponential(float(params["mean"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"workload.exec_time.{kind}: missing or bad parameter {exc}") from None
    raise ConfigError(f"workload.exec_time: unknown distribution {kind!r}")


def _section(raw, key, cls):
    data = raw.get(key) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{key}: expected a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{key}: unknown field(s) {sorted(unknown)}")
    return cls(**data)


def _float(v, where):
    if isinstance(v, str) and v.strip().lower() in ("inf", ".inf", "infinity"):
        return math.inf
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {v!r}") from None


def _list(v, where):
    if v is None:
        return []
    if not isinstance(v, list):
        raise ConfigError(f"{where}: expected a list, got {v!r}")
    return list(v)


def from_dict(raw, base_dir=None):
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    known = {"name", "cluster", "workload", "functions", "policies", "loads", "load_unit",
             "seeds", "run", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"config: unknown field(s) {sorted(unknown)}")
    cfg = ExperimentConfig(
        name=str(raw.get("name", "experiment")),
        cluster=_section(raw, "cluster", ClusterConfig),
        workload=_section(raw, "workload", WorkloadConfig),
        functions=_section(raw, "functions", FunctionsConfig),
        policies=_list(raw.get("policies", []), "policies"),
        loads=_list(raw.get("loads", []), "loads"),
        load_unit=str(raw.get("load_unit", "fraction")),
        seeds=_list(raw.get("seeds", [1]), "seeds"),
        run=_section(raw, "run", RunConfig),
    )
    out = raw.get("output") or {}
    if not isinstance(out, dict) or set(out) - {"dir", "per_invocation"}:
        raise ConfigError("output: expected {dir, per_invocation}")
    cfg.out_dir = str(out.get("dir", f"results/{cfg.name}"))
    cfg.per_invocation = bool(out.get("per_invocation", False))
    cfg.functions.keep_alive = _float(cfg.functions.keep_alive, "functions.keep_alive")
    cfg.functions.cold_start_penalty = _float(cfg.functions.cold_start_penalty,
                                              "functions.cold_start_penalty")
    cfg.loads = [_float(x, "loads[]") for x in cfg.loads]
    if cfg.workload.trace is not None and base_dir is not None:
        p = Path(cfg.workload.trace)
        if not p.is_absolute():
            cfg.workload.trace = str((Path(base_dir) / p).resolve())
    validate(cfg)
    return cfg


def validate(cfg):
    c = cfg.cluster
    if not isinstance(c.n_workers, int) or c.n_workers < 1:
        raise ConfigError("cluster.n_workers: must be a positive integer")
    if not isinstance(c.cores_per_worker, int) or c.cores_per_worker < 1:
        raise ConfigError("cluster.cores_per_worker: must be a positive integer")
    if c.slot_capacity != "8x_cores" and not (isinstance(c.slot_capacity, int) and c.slot_capacity > 0):
        raise ConfigError("cluster.slot_capacity: must be '8x_cores' or a positive integer")
    w = cfg.workload
    sources = [x is not None for x in (w.preset, w.trace, w.exec_time)]
    if sum(sources) != 1:
        raise ConfigError("workload: give exactly one of preset, trace, or an inline spec (exec_time)")
    if w.preset is not None and w.preset not in PRESETS:
        raise ConfigError(f"workload.preset: unknown {w.preset!r}; known: {sorted(PRESETS)}")
    if w.trace is not None and not Path(w.trace).exists():
        raise ConfigError(f"workload.trace: file not found: {w.trace}")
    if w.exec_time is not None:
        try:
            w.spec(1.0, None, 0).validate()
        except WorkloadError as exc:
            raise ConfigError(f"workload.{exc}") from None
    if not cfg.policies:
        raise ConfigError("policies: at least one policy is required")
    for p in cfg.policies:
        try:
            Policy.parse(str(p))
        except PolicyError as exc:
            raise ConfigError(f"policies: {exc}") from None
    if not cfg.loads:
        raise ConfigError("loads: at least one load is required")
    if any(not x > 0 for x in cfg.loads):
        raise ConfigError("loads: every load must be > 0")
    if cfg.load_unit not in ("fraction", "rps"):
        raise ConfigError("load_unit: must be 'fraction' or 'rps'")
    if not cfg.seeds or any(not isinstance(s, int) for s in cfg.seeds):
        raise ConfigError("seeds: must be a non-empty list of integers")
    r = cfg.run
    if not 0 <= r.warmup_fraction < 1:
        raise ConfigError("run.warmup_fraction: must be in [0, 1)")
    if not r.min_time > 0 and not r.min_completions > 0:
        raise ConfigError("run: min_time or min_completions must be positive")
    if r.overflow not in ("reject", "queue"):
        raise ConfigError("run.overflow: must be 'reject' or 'queue'")
    if r.hybrid_order not in ("id", "shuffled"):
        raise ConfigError("run.hybrid_order: must be 'id' or 'shuffled'")
    if not r.util_window > 0:
        raise ConfigError("run.util_window: must be > 0")
    f = cfg.functions
    try:
        f.profile()
    except ValueError as exc:
        raise ConfigError(f"functions: {exc}") from None
    return cfg


def preset_names():
    return sorted(p.name[:-5] for p in resources.files("serverless_sched.presets").iterdir()
                  if p.name.endswith(".yaml"))


def load_config(path_or_preset):
    """Load a YAML config file, or a shipped preset by name (e.g. ``fig2``)."""
    p = Path(path_or_preset)
    if p.exists():
        text = p.read_text(encoding="utf-8")
        base = p.parent
    else:
        res = resources.files("serverless_sched.presets") / f"{path_or_preset}.yaml"
        if not res.is_file():
            raise ConfigError(f"no config file or preset named {path_or_preset!r} "
                              f"(presets: {', '.join(preset_names())})")
        text = res.read_text(encoding="utf-8")
        base = None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: YAML parse error: {exc}") from None
    return from_dict(raw, base)
