#!/usr/bin/env python3
"""Run every experiment family on the shipped desk-scale configs.

Each subcommand goes through the same CLI entry point a user would call,
so this doubles as an end-to-end smoke test of the installed package.
Artifacts land under --out (default results/), one subdirectory per
experiment. Exits nonzero if any runner reports a failed verdict.

The full set takes roughly 10-15 minutes on one core; online-learning
dominates. Pass --skip online-learning for a quicker pass, or
--profile paper to lift the fleet to 500 users (expect hours).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from crb.cli import main as crb_main

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")

# (subcommand, config file) in cheap-first order so failures surface early.
JOBS = [
    ("sandwich-check", "tiny_sandwich.yaml"),
    ("dual-convergence", "dr_desk.yaml"),
    ("asymptotic-sweep", "dr_desk_homogeneous.yaml"),
    ("baseline-comparison", "dr_desk.yaml"),
    ("online-learning", "dr_desk.yaml"),
]


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results", help="root output directory")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, help="override master seed for every run")
    p.add_argument(
        "--skip",
        action="append",
        default=[],
        metavar="SUBCOMMAND",
        help="experiment to skip (repeatable)",
    )
    return p.parse_args()


def main() -> int:
    args = parse_args()
    results = []
    for command, config_name in JOBS:
        if command in args.skip:
            results.append((command, "skipped", 0.0))
            continue
        argv = [
            command,
            "--config",
            os.path.join(CONFIG_DIR, config_name),
            "--out",
            os.path.join(args.out, command),
            "--profile",
            args.profile,
        ]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        print(f"=== crb {' '.join(argv)}")
        t0 = time.monotonic()
        code = crb_main(argv)
        elapsed = time.monotonic() - t0
        results.append((command, "ok" if code == 0 else f"exit {code}", elapsed))

    print()
    width = max(len(c) for c, _, _ in results)
    for command, status, elapsed in results:
        print(f"{command:<{width}}  {status:<8} {elapsed:7.1f}s")
    failed = [c for c, status, _ in results if status not in ("ok", "skipped")]
    if failed:
        print(f"\nFAILED: {', '.join(failed)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
