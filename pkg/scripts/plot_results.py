#!/usr/bin/env python3
"""Render the standard figures from experiment artifacts.

Reads the CSVs written by run_all_desk.py (or the crb CLI directly) and
writes PNGs next to them. Experiments whose artifacts are missing are
skipped with a note, so this can run after a partial sweep.

Figures:
  dual_convergence.png    multiplier trace and per-context slack vs iteration
  asymptotic_sweep.png    per-arm optimality gap vs fleet size, log-log
  baseline_comparison.png paired totals, context-aware vs context-blind
  online_learning.png     per-epoch learner reward against the known-model run
"""

from __future__ import annotations

import argparse
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return rows


def plot_dual_convergence(src, dst):
    rows = read_csv(src)
    lam_keys = sorted(k for k in rows[0] if k.startswith("lambda_"))
    slack_keys = sorted(k for k in rows[0] if k.startswith("slack_"))
    its = [int(r["iteration"]) for r in rows]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.4), sharex=True)
    for k in lam_keys:
        ax0.plot(its, [float(r[k]) for r in rows], label=k.replace("lambda_", "g="))
    ax0.set_xlabel("iteration")
    ax0.set_ylabel("multiplier")
    ax0.legend(fontsize=7, ncol=2)
    for k in slack_keys:
        ax1.plot(its, [float(r[k]) for r in rows])
    ax1.axhline(0.0, color="k", lw=0.6)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("budget slack")
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    plt.close(fig)


def plot_asymptotic_sweep(src, dst):
    rows = read_csv(src)
    n = [int(r["N"]) for r in rows]
    gap = [float(r["gap_per_arm"]) for r in rows]
    err = [float(r["stderr_per_arm"]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.errorbar(n, gap, yerr=err, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("fleet size N")
    ax.set_ylabel("per-arm gap  V_rel - V_index/N")
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    plt.close(fig)


def plot_baseline_comparison(src, dst):
    rows = read_csv(src)
    crb = [float(r["crb_total"]) for r in rows]
    base = [float(r["baseline_total"]) for r in rows]
    lo = min(min(crb), min(base))
    hi = max(max(crb), max(base))
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.scatter(base, crb, s=12, alpha=0.6)
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("context-blind baseline total")
    ax.set_ylabel("context-aware index total")
    ax.set_title("points above the diagonal favor the index policy", fontsize=8)
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    plt.close(fig)


def plot_online_learning(src, dst):
    rows = read_csv(src)
    ep = [int(r["epoch"]) for r in rows]
    learner = [float(r["learner_reward"]) for r in rows]
    known = [float(r["known_reward"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(ep, learner, label="learner")
    ax.plot(ep, known, label="known model", ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("epoch reward (undiscounted)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    plt.close(fig)


PLOTS = [
    ("dual-convergence", "dual_convergence.csv", plot_dual_convergence),
    ("asymptotic-sweep", "asymptotic_sweep.csv", plot_asymptotic_sweep),
    ("baseline-comparison", "baseline_comparison.csv", plot_baseline_comparison),
    ("online-learning", "online_learning.csv", plot_online_learning),
]


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--root", default="results", help="directory run_all_desk.py wrote to")
    args = p.parse_args()

    made = 0
    for subdir, csv_name, fn in PLOTS:
        src = os.path.join(args.root, subdir, csv_name)
        if not os.path.exists(src):
            print(f"skip {subdir}: {src} not found")
            continue
        dst = src.replace(".csv", ".png")
        fn(src, dst)
        print(f"wrote {dst}")
        made += 1
    return 0 if made else 1


if __name__ == "__main__":
    import sys

    sys.exit(main())
