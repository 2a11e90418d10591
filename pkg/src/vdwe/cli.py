"""``vdwe <subcommand> --config <path> [--out <dir>] [--seed <n>] [--threads <n>]``.

Exit status: 0 when every check passes, 2 for configuration errors, 3 for a
numerical blow-up, 4 for a failed check (including positivity or buffer
aborts), 1 for I/O errors.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from . import experiments
from .config import parse_config
from .errors import BlowUpError, ConfigError, DomainTooSmallError, InvalidParametersError, SimulationError
from .io import read_series_csv, write_outputs

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_BLOWUP, EXIT_CHECK = 0, 1, 2, 3, 4

SUBCOMMANDS = ("simulate", "cone-test", "eos-check", "background-check", "inequality-suite", "diagnose")

log = logging.getLogger("vdwe")


def build_parser():
    parser = argparse.ArgumentParser(prog="vdwe", description=__doc__.split("\n")[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="section.key = value file")
    parser.add_argument("--out", default=None, help="output directory (diagnose: the run directory to read)")
    parser.add_argument("--seed", type=int, default=None, help="overrides experiment.seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for numpy backends")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _limit_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(max(1, n)))


def _print_record(record, stream):
    for name, ok in record.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    for key, value in record.summary.items():
        print(f"  {key}: {value}", file=stream)


def run_command(subcommand, cfg, out=None, stream=sys.stdout):
    """Run one pipeline and write its artifacts. Returns the exit status."""
    error = None
    if subcommand == "simulate":
        record, _, error = experiments.simulate(cfg)
    elif subcommand == "cone-test":
        record = experiments.cone_record(cfg)
    elif subcommand == "eos-check":
        record = experiments.eos_record(cfg)
    elif subcommand == "background-check":
        record = experiments.background_record(cfg)
    elif subcommand == "inequality-suite":
        record = experiments.inequality_record(cfg)
    elif subcommand == "diagnose":
        if out is None:
            raise ValueError("diagnose needs --out pointing at a run directory")
        series = read_series_csv(Path(out) / "series.csv")
        record = experiments.diagnose(cfg, series)
        out = Path(out) / "diagnose"
    else:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if out is not None:
        write_outputs(record, out, record.snapshots)
    _print_record(record, stream)
    if isinstance(error, BlowUpError):
        print(f"blow-up: {error}", file=stream)
        return EXIT_BLOWUP
    if error is not None:
        print(f"aborted: {error}", file=stream)
        return EXIT_CHECK
    return EXIT_OK if record.passed else EXIT_CHECK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    _limit_threads(args.threads)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = cfg.replace(experiment__seed=args.seed)
        return run_command(args.subcommand, cfg, args.out)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidParametersError, DomainTooSmallError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up at t={exc.t}: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
