"""Command-line entry point: wellspin <scenario> --config <path>."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import SCENARIOS, run, validate_config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="wellspin",
        description=(
            "Numerical experiments on discrete multi-well energies and "
            "lattice spin Hamiltonians"
        ),
    )
    parser.add_argument(
        "command",
        choices=list(SCENARIOS) + ["validate"],
        help="scenario to run, or 'validate' to check a config only",
    )
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument(
        "--force",
        action="store_true",
        help="run even when the mesh fails the twin-incompatibility check",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="cap on process-level parallelism",
    )
    parser.add_argument(
        "--out",
        default=None,
        help="output directory (default: $WELLSPIN_OUT/<scenario> or runs/<scenario>)",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        problems = validate_config(args.config)
        if problems:
            for p in problems:
                print(p)
            return 4
        print("config ok")
        return 0

    out = args.out
    if out is None and "WELLSPIN_OUT" in os.environ:
        out = str(Path(os.environ["WELLSPIN_OUT"]) / args.command)
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if cfg.get("scenario") != args.command:
        print(
            f"config error: scenario: config says {cfg.get('scenario')!r}, "
            f"command line says {args.command!r}"
        )
        return 4
    return run(cfg, force=args.force, workers=args.workers, out_dir=out)


if __name__ == "__main__":
    sys.exit(main())
