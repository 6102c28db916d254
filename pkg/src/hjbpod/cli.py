"""Command-line entry point.

Subcommands run the pipeline stages; `run-all` chains them.  Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 I/O or file
format error.
"""

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, FormatError, NumericalError
from .pipeline import (
    cmd_control,
    cmd_reduce,
    cmd_report,
    cmd_run_all,
    cmd_simulate,
    cmd_solve_hjb,
)

_STAGES = {
    "simulate": cmd_simulate,
    "reduce": cmd_reduce,
    "solve-hjb": cmd_solve_hjb,
    "control": cmd_control,
    "report": cmd_report,
    "run-all": cmd_run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjbpod",
        description="Cavity-flow feedback control via model reduction and dynamic programming",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        stage = sub.add_parser(name, help=f"run the {name} stage")
        stage.add_argument("--config", required=True, help="path to the key = value config file")
        stage.add_argument("--out", default=None, help="output directory (default: config out_dir)")
        stage.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config, args.override)
        out = Path(args.out) if args.out is not None else Path(config.out_dir)
        _STAGES[args.command](config, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (FormatError, OSError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
