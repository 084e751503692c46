"""Command line entry point: ``adaband SUBCOMMAND --config PATH [--seed U64] [--out PATH] [--threads INT]``.

Exit codes: 0 success, 2 configuration error, 3 numerical guard violation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, load_config
from .drivers import format_csv, resolve_threads, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaband", description="Adaptive confidence band experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment" if name != "calibrate" else "calibrate band constants")
        p.add_argument("--config", required=True, help="experiment config file (INI)")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--out", help="CSV output path (default: config output, else stdout)")
        p.add_argument("--threads", type=int, help="worker threads, 0 = all cores (default: $ADABAND_THREADS or 1)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            if args.command != "calibrate":
                raise ConfigError(
                    f"{args.config}: config is for experiment {cfg.experiment!r}, not {args.command!r}"
                )
            cfg = replace(cfg, experiment="calibrate")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        threads = resolve_threads(args.threads)
        rows = run(cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical guard violation: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = format_csv(rows)
    out = args.out or cfg.output
    if out:
        Path(out).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
