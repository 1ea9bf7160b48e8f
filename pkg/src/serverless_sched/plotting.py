"""Line charts of a summary CSV: one line per policy, metric against load."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import read_summary_csv  # noqa: E402

NON_METRIC = ("policy", "load", "seed")


def plot(summary_csv, metric, out_path, logy=False):
    rows = read_summary_csv(summary_csv)
    if not rows:
        raise ValueError(f"{summary_csv} has no rows")
    columns = [c for c in rows[0] if c not in NON_METRIC]
    if metric not in columns:
        raise KeyError(f"unknown metric {metric!r}; available: {', '.join(columns)}")
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        series[r["policy"]][float(r["load"])].append(float(r[metric]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for policy, by_load in series.items():
        xs = sorted(by_load)
        ys = [sum(by_load[x]) / len(by_load[x]) for x in xs]
        ax.plot(xs, ys, marker="o", label=policy)
    ax.set_xlabel("load")
    ax.set_ylabel(metric)
    if logy:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
