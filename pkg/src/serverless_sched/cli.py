"""Command-line entry point: run sweeps, validate configs, plot, oracle self-checks."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, WorkloadConfig, load_config, preset_names, validate
from .simcore import SimulationError
from .workload import WorkloadError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def cmd_run(args):
    from .sweep import run_experiment

    cfg = load_config(args.config)
    if args.seeds:
        cfg.seeds = args.seeds
    if args.policies:
        cfg.policies = [p for p in args.policies.split(",") if p.strip()]
    if args.workload:
        cfg.workload = WorkloadConfig(preset=args.workload)
    if args.loads:
        cfg.loads = args.loads
    validate(cfg)
    rows = run_experiment(cfg, out_dir=args.out, parallelism=args.parallelism)
    out = args.out or cfg.out_dir
    print(f"{len(rows)} points written to {out}/summary.csv")
    return EXIT_OK


def cmd_validate(args):
    cfg = load_config(args.config)
    n = len(cfg.policies) * len(cfg.loads) * len(cfg.seeds)
    print(f"{args.config}: ok ({n} simulation points, config sha256 {cfg.digest()[:12]})")
    return EXIT_OK


def cmd_plot(args):
    from .plotting import plot

    try:
        plot(args.summary, args.metric, args.out, logy=args.logy)
    except (KeyError, ValueError) as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {args.out}")
    return EXIT_OK


def _mean_response(policy, n_workers, workload, completions):
    from .engine import simulate

    # unbounded slots: the closed forms assume an infinite buffer
    report = simulate(policy, n_workers, 1, workload, max_completions=completions,
                      slot_capacity=10**9, warmup_fraction=0.05, util_window=None)
    m = report.steady
    return float(report.latency[m].mean()), float((report.columns["dispatch"] - report.columns["arrival"])[m].mean())


def cmd_oracle(args):
    from .oracles import mm1_mean_response, mmc_mean_wait
    from .workload import Exponential, WorkloadSpec, generate

    ok = True
    if args.which == "mm1":
        expected = mm1_mean_response(0.5, 1.0)
        for policy in ("E/LL/FCFS", "E/LL/PS"):
            spec = WorkloadSpec(1, (1.0,), 0.5, Exponential(1.0), seed=args.seed)
            got, _ = _mean_response(policy, 1, generate(spec), args.completions)
            err = abs(got - expected) / expected
            passed = err <= 0.02
            ok &= passed
            print(f"M/M/1 {policy:10s} mean response {got:.4f}  analytic {expected:.4f}  "
                  f"rel.err {err:.4f}  {'PASS' if passed else 'FAIL'}")
    else:
        expected = mmc_mean_wait(3.2, 1.0, 4)
        spec = WorkloadSpec(1, (1.0,), 3.2, Exponential(1.0), seed=args.seed)
        _, got = _mean_response("L", 4, generate(spec), args.completions)
        err = abs(got - expected) / expected
        ok = err <= 0.03
        print(f"M/M/4 L mean wait {got:.4f}  Erlang-C {expected:.4f}  rel.err {err:.4f}  "
              f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser():
    parser = argparse.ArgumentParser(
        prog="serverless-sched",
        description="Simulate scheduling policies for serverless function invocations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a policy x load x seed sweep")
    p.add_argument("config", help=f"YAML config path or preset name ({', '.join(preset_names())})")
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.add_argument("--seeds", type=int, nargs="+", help="override the config's seeds")
    p.add_argument("--parallelism", type=int, default=1, help="number of worker processes")
    p.add_argument("--policies", help="comma-separated policies overriding the config, e.g. E/H/PS,E/LL/PS")
    p.add_argument("--workload", help="workload preset name overriding the config's workload")
    p.add_argument("--loads", type=float, nargs="+", help="override the config's loads")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plot", help="plot one summary metric against load")
    p.add_argument("summary", help="summary.csv written by `run`")
    p.add_argument("--metric", default="p99_slowdown")
    p.add_argument("--out", required=True, help="output image (.svg recommended)")
    p.add_argument("--logy", action="store_true", help="log-scale y axis")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("oracle", help="compare the simulator against closed-form queueing results")
    p.add_argument("which", choices=("mm1", "mmc"))
    p.add_argument("--completions", type=int, default=1_100_000)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, WorkloadError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
