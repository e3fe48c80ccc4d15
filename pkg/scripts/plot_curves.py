#!/usr/bin/env python3
"""Render metric-curve CSV reports as a three-panel figure.

Not part of the report contract; any plotting tool can consume the CSV.

    continual-ridge compare --scenario identity --tasks 20 --gamma 1.2 \
        --replications 100 --out compare.csv
    python scripts/plot_curves.py compare.csv -o curves.png
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

TITLES = {"avg_risk": "Average risk", "bwt": "Backward transfer",
          "fwt": "Forward transfer"}


def load(path):
    series = defaultdict(lambda: {"k": [], "theory": [], "mean": [], "se": []})
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = series[row["metric"]]
            s["k"].append(int(row["k"]))
            s["theory"].append(float(row["theory_value"]) if row["theory_value"] else None)
            s["mean"].append(float(row["sim_mean"]) if row["sim_mean"] else None)
            s["se"].append(float(row["sim_se"]) if row["sim_se"] else None)
    return series


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("csv_path")
    parser.add_argument("-o", "--out", default="curves.png")
    args = parser.parse_args()

    series = load(args.csv_path)
    metrics = [m for m in ("avg_risk", "bwt", "fwt") if m in series]
    fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.2))
    if len(metrics) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metrics):
        s = series[metric]
        if any(v is not None for v in s["theory"]):
            ax.plot(s["k"], s["theory"], "-", color="tab:blue", label="theory")
        if any(v is not None for v in s["mean"]):
            ax.errorbar(s["k"], s["mean"], yerr=[2 * e for e in s["se"]], fmt="o",
                        ms=3, color="tab:red", label="simulation (±2 SE)")
        ax.set_xlabel("task number")
        ax.set_title(TITLES[metric])
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
