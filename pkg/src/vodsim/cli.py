"""Command-line interface: run experiments, emit presets, validate configs.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import ConfigError, VodsimError
from .experiment import (
    PRESET_NAMES,
    emit,
    load_config,
    preset,
    run_experiment,
    save_config,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vodsim",
        description="On-demand transcoding cluster simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment in a config file")
    run_p.add_argument("config", help="path to a YAML experiment config")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the base seed")
    run_p.add_argument("--replications", type=int, default=None,
                       help="override the replication count")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.add_argument("--out-dir", default="results")

    preset_p = sub.add_parser(
        "preset", help="write the config files of a named scenario family")
    preset_p.add_argument("name", help=f"one of: {', '.join(PRESET_NAMES)}")
    preset_p.add_argument("--out", default=None,
                          help="output directory (default presets/<name>)")

    validate_p = sub.add_parser("validate", help="check a config file")
    validate_p.add_argument("config")

    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, base_seed=args.seed)
    if args.replications is not None:
        config = replace(config, replications=args.replications)
    config.validate()
    result = run_experiment(config)
    paths = emit(result, args.format, args.out_dir)
    for row in result.points:
        print(f"{config.label} n={row['num_requests']} {row['metric']}: "
              f"{row['mean']:.4f} [{row['ci_low']:.4f}, {row['ci_high']:.4f}]")
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_preset(args) -> int:
    configs = preset(args.name)
    out_dir = args.out or os.path.join("presets", args.name)
    os.makedirs(out_dir, exist_ok=True)
    for label, config in configs:
        path = os.path.join(out_dir, f"{label}.yaml")
        save_config(config, path)
        print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: OK")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "preset":
            return _cmd_preset(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except VodsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
