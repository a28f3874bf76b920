"""
Command-line interface.

    python -m irslink <subcommand> [--config PATH | --preset NAME] [--out PATH]
                      [--format csv|json] [--seed N] [--trials N] ...

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure
(including a failed validate run).
"""

import argparse
import logging
import sys
from typing import List, Optional, Sequence

from .config import PRESETS, SystemConfig, load_config
from .errors import ConfigurationError, EstimationFailure, GeometryError, IRSLinkError, NumericalError
from .experiments import (
    SweepSpec,
    run_beam_pattern,
    run_convergence,
    run_mse_b2u,
    run_mse_i2u,
    run_rate_curves,
)
from .repro import ResultTable
from .validation import run_validation

logger = logging.getLogger("IRSLink.CLI")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--config", help="JSON file with SystemConfig fields")
    source.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="Named scenario (default: desk)")
    common.add_argument("--out", help="Write the result table here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    common.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    common.add_argument("--trials", type=int, help="Monte Carlo trials per point (overrides the config)")
    common.add_argument("--workers", type=int, help="Threads for Monte Carlo trials")
    common.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    common.add_argument("--log-file", help="Also append log records to this file")
    return common


def setup_logging(level: str = "WARNING", log_file: Optional[str] = None) -> None:
    """Log to stderr, and to log_file as well when given."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, handlers=handlers, force=True)


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="irslink", description="IRS-aided MISO link simulator")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("mse-b2u", parents=[common], help="ML angle estimation MSE at the BS")
    p.add_argument("--sweep", choices=("rx_snr_db", "n_bs", "rician_b2u"), default="rx_snr_db")
    p.add_argument("--values", type=float, nargs="+", default=[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])

    p = sub.add_parser("mse-i2u", parents=[common], help="IRS-user angle MSE against the linearized prediction")
    p.add_argument("--sweep", choices=("ratio_Ra", "rx_snr_db"), default="ratio_Ra")
    p.add_argument("--values", type=float, nargs="+", default=[0.5, 1.0, 2.0])

    p = sub.add_parser("converge", parents=[common], help="SNR along the joint optimization")
    p.add_argument("--m-values", type=int, nargs="+", default=[16, 64, 144])

    p = sub.add_parser("beam-pattern", parents=[common], help="BS radiation pattern of the optimized beam")
    p.add_argument("--grid", type=int, nargs=2, default=[91, 91], metavar=("ELEVATION", "AZIMUTH"))

    p = sub.add_parser("rate-curves", parents=[common], help="Achievable rate, approximation and upper bound")
    p.add_argument("--sweep", choices=("p_bs_dbm", "m_irs"), default="p_bs_dbm")
    p.add_argument("--values", type=float, nargs="+", default=[0.0, 5.0, 10.0, 15.0, 20.0])

    sub.add_parser("validate", parents=[common], help="Run the numerical self-checks")
    return parser


def _load(args: argparse.Namespace) -> SystemConfig:
    config = load_config(args.config) if args.config else SystemConfig.preset(args.preset)
    overrides = {
        name: getattr(args, name)
        for name in ("seed", "trials", "workers")
        if getattr(args, name) is not None
    }
    return config.with_updates(**overrides) if overrides else config


def _run(args: argparse.Namespace, config: SystemConfig) -> ResultTable:
    if args.command == "mse-b2u":
        return run_mse_b2u(config, SweepSpec(args.sweep, tuple(args.values)))
    if args.command == "mse-i2u":
        return run_mse_i2u(config, SweepSpec(args.sweep, tuple(args.values)))
    if args.command == "converge":
        return run_convergence(config, tuple(args.m_values))
    if args.command == "beam-pattern":
        return run_beam_pattern(config, (args.grid[0], args.grid[1]))
    if args.command == "rate-curves":
        return run_rate_curves(config, SweepSpec(args.sweep, tuple(args.values), args.trials))
    raise UsageError(f"Unknown command {args.command}")


def _emit(table: ResultTable, args: argparse.Namespace) -> None:
    if args.out:
        table.save(args.out, args.fmt)
    else:
        text = table.to_json() if args.fmt == "json" else table.to_csv()
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv, run one subcommand and return its exit code.

    Output files are only written once the run has succeeded.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except UsageError:
        return EXIT_CONFIG
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level, args.log_file)

    try:
        config = _load(args)
        logger.info(f"Running {args.command} (config {config.config_hash()}, seed {config.seed})")
        if args.command == "validate":
            table, results = run_validation(config)
            for r in results:
                status = "PASS" if r.passed else "FAIL"
                print(f"{status} {r.check} value={r.value:.3e} tolerance={r.tolerance:.1e}")
            if args.out:
                table.save(args.out, args.fmt)
            return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL
        table = _run(args, config)
        _emit(table, args)
        return EXIT_OK
    except (ConfigurationError, GeometryError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (NumericalError, EstimationFailure) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except IRSLinkError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
