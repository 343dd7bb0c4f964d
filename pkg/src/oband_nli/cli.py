"""Command-line interface for oband-nli."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .engine import ClosedFormModel, NliBreakdown
from .oracle import IntegralOracle, check_budget
from .report import (
    REPORT_FORMATS,
    ComparisonRow,
    ComparisonStats,
    EstimateRow,
    FitRow,
    ReportEmitter,
    SweepRow,
    SweepStatsRow,
)
from .system import (
    EngineSettings,
    FibreSpec,
    WdmGrid,
    dispersion_to_betas,
    load_config,
)
from .utils import ConfigError, NliError, dbm_to_watt, offset_to_wavelength

__all__ = ["main"]

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
SWEEP_AXES = ("spans", "bandwidth", "power")


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _report_error(args: argparse.Namespace, error: NliError) -> int:
    """
    Print an error on stderr and return its exit code.

    Args:
        args: Parsed command-line arguments
        error: The failure to report

    Returns:
        The exit code mapped to the error class
    """
    print(f"Error: {error}", file=sys.stderr)
    config = getattr(args, "config", None)
    field = getattr(error, "field", None)
    if config and field:
        line = _field_line(Path(config), field)
        if line is not None:
            print(f"  near line {line} of {config}", file=sys.stderr)
    if getattr(args, "error_json", False):
        payload = {
            "error": type(error).__name__,
            "message": str(error),
            "exit_code": error.exit_code,
        }
        print(json.dumps(payload), file=sys.stderr)
    return error.exit_code


def _field_line(path: Path, field: str) -> Optional[int]:
    """First line of the config file that names the last part of a dotted field."""
    key = f'"{field.rsplit(".", 1)[-1]}"'
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError:
        return None
    for n, line in enumerate(lines, start=1):
        if key in line:
            return n
    return None


def _parse_channels(text: Optional[str], grid: WdmGrid) -> Optional[List[int]]:
    """
    Parse a 1-based comma list such as ``1,21,41`` into 0-based indices.

    Raises:
        ConfigError: On malformed or out-of-range entries
    """
    if text is None:
        return None
    indices = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            n = int(item)
        except ValueError:
            raise ConfigError(f"not a channel number: {item!r}", "--channels") from None
        if not 1 <= n <= grid.n_channels:
            raise ConfigError(
                f"channel {n} outside 1..{grid.n_channels}", "--channels"
            )
        indices.append(n - 1)
    if not indices:
        raise ConfigError("no channels given", "--channels")
    return sorted(set(indices))


def _parse_values(text: str) -> List[float]:
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(float(item))
        except ValueError:
            raise ConfigError(f"not a number: {item!r}", "--values") from None
    if not values:
        raise ConfigError("sweep needs at least one value", "--values")
    return values


def _load(args: argparse.Namespace) -> Tuple[FibreSpec, WdmGrid, EngineSettings]:
    if args.seed is not None:
        logger.debug("seed %d is reserved; the engines are deterministic", args.seed)
    return load_config(args.config)


def _emitter(args: argparse.Namespace, kind: str) -> ReportEmitter:
    output = Path(args.out) if args.out else None
    return ReportEmitter(kind, args.format, output)


def cmd_validate(args: argparse.Namespace) -> int:
    """Handle 'validate' command - check a configuration file."""
    spec, grid, settings = _load(args)
    betas = dispersion_to_betas(spec)
    first = offset_to_wavelength(float(grid.offsets[-1]), spec.f_ref) * 1e9
    last = offset_to_wavelength(float(grid.offsets[0]), spec.f_ref) * 1e9
    print(f"Configuration valid: {args.config}")
    print(f"  {grid.n_channels} channel(s), {grid.n_spans} span(s)")
    print(f"  occupied bandwidth: {grid.total_bandwidth / 1e12:.4g} THz")
    print(f"  wavelengths: {first:.2f} - {last:.2f} nm")
    print(f"  beta2 at reference: {betas.beta2:.4g} s^2/m")
    print(f"  profile mode: {settings.profile_mode}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    """Handle 'fit' command - report per-channel ISRS fit parameters."""
    spec, grid, settings = _load(args)
    model = ClosedFormModel(spec, grid, settings)
    fits = model.fits(args.threads)
    with _emitter(args, "fit") as report:
        report.add_rows(FitRow.from_fit(n, fit, spec) for n, fit in enumerate(fits))
        report.save()
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    """Handle 'estimate' command - closed-form NLI per channel."""
    spec, grid, settings = _load(args)
    channels = _parse_channels(args.channels, grid)
    results = ClosedFormModel(spec, grid, settings).evaluate(channels, args.threads)
    with _emitter(args, "estimate") as report:
        report.add_rows(EstimateRow.from_breakdown(b) for b in results)
        report.save()
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    """Handle 'oracle' command - integral-model NLI per channel."""
    spec, grid, settings = _load(args)
    channels = _parse_channels(args.channels, grid)
    results = IntegralOracle(spec, grid, settings).evaluate(channels, args.threads)
    with _emitter(args, "oracle") as report:
        report.add_rows(EstimateRow.from_breakdown(b) for b in results)
        report.save()
    return 0


def _compare(
    spec: FibreSpec,
    grid: WdmGrid,
    settings: EngineSettings,
    channels: Optional[List[int]],
    threads: int,
) -> List[ComparisonRow]:
    count = grid.n_channels if channels is None else len(channels)
    check_budget(grid, settings.oracle, count)
    closed = ClosedFormModel(spec, grid, settings).evaluate(channels, threads)
    oracle = IntegralOracle(spec, grid, settings).evaluate(channels, threads)
    return [ComparisonRow.from_pair(c, o) for c, o in zip(closed, oracle)]


def cmd_compare(args: argparse.Namespace) -> int:
    """Handle 'compare' command - closed form against the integral model."""
    spec, grid, settings = _load(args)
    channels = _parse_channels(args.channels, grid)
    rows = _compare(spec, grid, settings, channels, args.threads)
    stats = ComparisonStats.from_rows(rows)
    with _emitter(args, "compare") as report:
        report.set_summary(stats.summary())
        report.add_rows(rows)
        report.save()
    if stats.mean_abs is not None:
        logger.info(
            "mean |delta| %.3f dB, max %.3f dB at %.2f nm",
            stats.mean_abs,
            stats.max_abs,
            stats.argmax_wavelength_nm,
        )
    return 0


def _sweep_grid(grid: WdmGrid, axis: str, value: float) -> WdmGrid:
    """Grid at one sweep point: span count, occupied bandwidth [THz] or power [dBm]."""
    if axis == "spans":
        if not (value.is_integer() and value >= 1):
            raise ConfigError(f"span count must be a positive integer, got {value:g}", "--values")
        return grid.with_spans(int(value))
    if axis == "bandwidth":
        return grid.restrict_bandwidth(value * 1e12)
    return grid.with_flat_power(dbm_to_watt(value))


def cmd_sweep(args: argparse.Namespace) -> int:
    """Handle 'sweep' command - repeat estimate or compare along one axis."""
    spec, grid, settings = _load(args)
    values = _parse_values(args.values)
    grids = [(value, _sweep_grid(grid, args.axis, value)) for value in values]

    with _emitter(args, "sweep") as report:
        for value, point in grids:
            channels = _parse_channels(args.channels, point)
            if args.compare:
                rows = _compare(spec, point, settings, channels, args.threads)
                stats = ComparisonStats.from_rows(rows)
                report.add(SweepStatsRow.from_stats(args.axis, value, stats))
            else:
                results: Sequence[NliBreakdown] = ClosedFormModel(
                    spec, point, settings
                ).evaluate(channels, args.threads)
                report.add_rows(
                    SweepRow.from_breakdown(args.axis, value, b) for b in results
                )
            logger.info("sweep %s = %g done", args.axis, value)
        report.save()
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", "-c", required=True, help="Path to the JSON system configuration"
    )
    common.add_argument(
        "--out", "-o", help="Report output path (default: stdout)"
    )
    common.add_argument(
        "--format", choices=REPORT_FORMATS, default="csv", help="Report format (default: csv)"
    )
    common.add_argument(
        "--threads", type=int, default=1, help="Worker threads for per-channel work"
    )
    common.add_argument(
        "--seed", type=int, help="Reserved; results do not depend on it"
    )
    common.add_argument(
        "--log-level", choices=LOG_LEVELS, default="WARNING", help="Logging level on stderr"
    )
    common.add_argument(
        "--error-json",
        action="store_true",
        help="Also print failures as one JSON line on stderr",
    )
    common.add_argument(
        "--channels", help="1-based channel numbers, comma separated (default: all)"
    )
    return common


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for CLI."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="oband-nli",
        description="Closed-form ISRS GN model of nonlinear interference in O-band WDM links",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Check a configuration
  oband-nli validate --config configs/reference161.json

  # Per-channel NLI of the closed-form model as CSV
  oband-nli estimate --config configs/reference161.json --out estimate.csv

  # Integral model for three channels, 4 threads
  oband-nli oracle --config configs/reference161.json --channels 1,81,161 --threads 4

  # Closed form against the integral model
  oband-nli compare --config configs/reference161.json --channels 21 --format json

  # Error against span count
  oband-nli sweep --config configs/reference161.json --axis spans --values 1,2,5,10 --compare

Exit codes: 0 ok, 1 invalid configuration, 2 numerical failure, 3 oracle budget.
""",
    )

    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    subparsers.add_parser("validate", parents=[common], help="Validate a configuration")
    subparsers.add_parser("fit", parents=[common], help="Per-channel ISRS fit parameters")
    subparsers.add_parser(
        "estimate", parents=[common], help="Closed-form NLI per channel"
    )
    subparsers.add_parser(
        "oracle", parents=[common], help="Numerical integral model NLI per channel"
    )
    subparsers.add_parser(
        "compare", parents=[common], help="Closed form against the integral model"
    )

    sweep_parser = subparsers.add_parser(
        "sweep", parents=[common], help="Repeat estimate or compare along one axis"
    )
    sweep_parser.add_argument(
        "--axis", required=True, choices=SWEEP_AXES, help="Swept quantity"
    )
    sweep_parser.add_argument(
        "--values",
        required=True,
        help="Comma separated points: span counts, bandwidth in THz or power in dBm",
    )
    sweep_parser.add_argument(
        "--compare",
        action="store_true",
        help="Report comparison statistics instead of per-channel estimates",
    )

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    _configure_logging(args.log_level)
    if args.threads < 1:
        return _report_error(args, ConfigError("must be >= 1", "--threads"))

    try:
        return COMMANDS[args.command](args)
    except NliError as e:
        return _report_error(args, e)
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        return NliError.exit_code


if __name__ == "__main__":
    sys.exit(main())
