"""Command-line entry point: ``fbmc-uplink nmse|sumrate --config FILE``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import run_nmse_sweep, run_sumrate_sweep
from .results import emit

OUT_ENV = "FBMC_UPLINK_OUT"
DEFAULT_OUT = "results"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_KINDS = {"nmse": ("nmse_single", "nmse_multi"), "sumrate": ("sumrate_cell",)}


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmc-uplink",
        description="Monte-Carlo experiments for interleaved FBMC uplink pilots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("nmse", "channel-estimation NMSE sweep"), ("sumrate", "MRC sum-rate sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment .cfg file")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--trials", type=_positive, help="override the trial count")
        p.add_argument(
            "--out",
            help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})",
        )
        p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
        p.add_argument("--threads", type=_positive, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
        if cfg.kind not in _KINDS[args.command]:
            raise ConfigError(
                "experiment.kind", f"{cfg.kind!r} cannot run under '{args.command}'"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        run = run_nmse_sweep if args.command == "nmse" else run_sumrate_sweep
        table = run(cfg, threads=args.threads)
        path = emit(table, out_dir, args.format, stem=Path(args.config).stem)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
