"""Command line entry points.

    slicesim run <plan.ini>        one run per seed at the plan's base config
    slicesim sweep <plan.ini>      full cartesian sweep x seeds
    slicesim validate <config.ini> parse, validate and print a scenario
    slicesim report <run_dir>      regenerate summary.csv and figures

Flags --seed, --slots, --scheduler and --out override the plan; environment
variables SLICESIM_SEED, SLICESIM_SLOTS, SLICESIM_SCHEDULER and SLICESIM_OUT
do the same when the flag is absent.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .harness import load_plan, report_run, run_experiment


def _env_default(name: str, cast=str):
    raw = os.environ.get(f"SLICESIM_{name}")
    return None if raw is None else cast(raw)


def _apply_overrides(plan, args) -> None:
    seed = args.seed if args.seed is not None else _env_default("SEED", int)
    if seed is not None:
        plan.seeds = [seed]
    slots = args.slots if args.slots is not None else _env_default("SLOTS", int)
    if slots is not None:
        plan.slots = slots
    sched = args.scheduler or _env_default("SCHEDULER")
    if sched is not None:
        plan.scheduler = sched
    out = args.out or _env_default("OUT")
    if out is not None:
        plan.out_dir = out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicesim",
        description="eMBB/URLLC dynamic multiplexing simulator")
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb in ("run", "sweep"):
        p = sub.add_parser(verb)
        p.add_argument("plan", help="experiment plan INI file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--slots", type=int, default=None)
        p.add_argument("--scheduler", default=None,
                       choices=["drra", "pgacl", "sum-rate", "sum-log",
                                "lmcs", "equal"])
        p.add_argument("--out", default=None)

    p = sub.add_parser("validate")
    p.add_argument("config", help="scenario config INI file")

    p = sub.add_parser("report")
    p.add_argument("run_dir", help="existing run directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb in ("run", "sweep"):
            plan = load_plan(args.plan)
            _apply_overrides(plan, args)
            dirs = run_experiment(plan, sweep=(args.verb == "sweep"))
            for d in dirs:
                print(d)
        elif args.verb == "validate":
            cfg = load_config(args.config)
            for key, value in sorted(cfg.to_dict().items()):
                print(f"{key} = {value}")
        elif args.verb == "report":
            summary = report_run(args.run_dir)
            for key, value in sorted(summary.items()):
                print(f"{key} = {value}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
