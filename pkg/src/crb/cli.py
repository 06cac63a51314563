"""Command-line front end: one subcommand per experiment family.

Exit codes: 0 when the experiment ran and passed its built-in verdict, 2
when it ran but the verdict failed, 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config_io import (
    AppConfig,
    ConfigError,
    DrConfig,
    DualConfig,
    ExperimentConfig,
    dump_instance,
    load_config,
    with_resolved_raw,
)
from .experiments import (
    run_asymptotic_sweep,
    run_baseline_comparison,
    run_dual_convergence,
    run_online_learning,
    run_sandwich_check,
)
from .simulator import OracleSizeError
from .version import __version__

RUNNERS = {
    "dual-convergence": run_dual_convergence,
    "asymptotic-sweep": run_asymptotic_sweep,
    "baseline-comparison": run_baseline_comparison,
    "online-learning": run_online_learning,
    "sandwich-check": run_sandwich_check,
}


def default_config() -> AppConfig:
    """Desk-scale demand-response defaults, used when --config is absent."""
    return with_resolved_raw(
        AppConfig(
            dr=DrConfig(num_users=50, seed=7),
            inline=None,
            dual=DualConfig(),
            experiment=ExperimentConfig(),
        )
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crb",
        description="Contextual restless bandits: dual solver and experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config path (default: built-in desk DR)")
        p.add_argument("--seed", type=int, help="override experiment.master_seed")
        p.add_argument("--out", help="output directory (default: runs/<command>)")
        p.add_argument("--runs", type=int, help="override experiment.runs")
        p.add_argument("--horizon", type=int, help="override experiment.horizon")
        p.add_argument(
            "--profile",
            choices=("desk", "paper"),
            default="desk",
            help="paper profile lifts N to 500 and runs to 500",
        )

    for name, runner in RUNNERS.items():
        p = sub.add_parser(name, help=runner.__doc__.splitlines()[0].lower())
        common(p)

    p = sub.add_parser("dump-instance", help="write the built instance as YAML")
    p.add_argument("--config", help="YAML config path (default: built-in desk DR)")
    p.add_argument("--out", default="instance.yaml", help="output file")
    return parser


def resolve_config(args) -> AppConfig:
    cfg = load_config(args.config) if args.config else default_config()
    exp = cfg.experiment
    if getattr(args, "seed", None) is not None:
        exp = replace(exp, master_seed=args.seed)
    if getattr(args, "runs", None) is not None:
        exp = replace(exp, runs=args.runs)
    if getattr(args, "horizon", None) is not None:
        exp = replace(exp, horizon=args.horizon)
    dr = cfg.dr
    if getattr(args, "profile", "desk") == "paper":
        if dr is not None:
            dr = replace(dr, num_users=500)
        exp = replace(exp, runs=500, sweep_runs=500)
    return with_resolved_raw(
        AppConfig(dr=dr, inline=cfg.inline, dual=cfg.dual, experiment=exp)
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for verdict failures.
        return 0 if e.code in (0, None) else 1

    try:
        cfg = resolve_config(args)
        if args.command == "dump-instance":
            dump_instance(cfg.build_instance(), args.out)
            print(f"instance written to {args.out}")
            return 0
        out_dir = args.out or f"runs/{args.command}"
        summary = RUNNERS[args.command](cfg, out_dir)
        verdict = summary.get("pass")
        if verdict is None or verdict:
            print(f"{args.command}: ok ({out_dir})")
            return 0
        print(f"{args.command}: verdict FAILED, see {out_dir}/summary.json")
        return 2
    except (ConfigError, OracleSizeError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
