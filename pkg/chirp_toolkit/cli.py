#!/usr/bin/env python3
"""
chirp-sim - chart-and-chirp FMCW predistortion simulator.

Usage:
    chirp-sim validate configs/reference_reproduction.yaml
    chirp-sim run --config configs/reference_reproduction.yaml --out runs/ref --jobs 4
    chirp-sim run --config configs/reference_reproduction.yaml --check
    chirp-sim learn --config cfg.yaml --out runs/ref --from runs/ref
    chirp-sim report runs/ref/report.json

Exit codes:
    0  success
    1  validation error (config, parameters)
    2  runtime error (a pipeline stage failed)
    3  acceptance-check failure (run --check)
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from chirp_toolkit.config import load_config, validate_config_file
from chirp_toolkit.files import load_json
from chirp_toolkit.pipeline import STAGES, PipelineResult, run_pipeline
from chirp_toolkit.schemas import ChirpToolkitError, StageError, ValidationError

logger = logging.getLogger("chirp_toolkit.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3

console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool) -> None:
    """RichHandler on stderr; stage banners at INFO, library at WARNING unless verbose."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=verbose, rich_tracebacks=verbose)],
        force=True,
    )
    if not verbose:
        logging.getLogger("chirp_toolkit.cli").setLevel(logging.INFO)
        logging.getLogger("chirp_toolkit.pipeline").setLevel(logging.INFO)


def _fmt(value: Optional[float], scale: float = 1.0, digits: int = 2) -> str:
    return "-" if value is None else f"{value / scale:.{digits}f}"


# =============================================================================
# Rendering
# =============================================================================


def render_report(report: Dict[str, Any]) -> None:
    """Print plan, case and check tables for a metrics report."""
    learn = report.get("learn")
    if learn:
        console.print(
            f"[bold]learn[/bold]: P={learn['order']}, {learn['n_chart'] + 1} chart points, "
            f"round trip {_fmt(learn.get('round_trip_error_hz'), 1e3)} kHz, "
            f"cond {learn.get('condition_number') or 0:.3g}"
        )

    plans = report.get("plans") or {}
    if plans:
        table = Table(title="Chirps")
        table.add_column("Plan", style="cyan")
        table.add_column("N_DAC", justify="right")
        table.add_column("B [GHz]", justify="right")
        table.add_column("RMS FM error [kHz]", justify="right")
        table.add_column("phi_e @ 1 MHz [dBc/Hz]", justify="right")
        table.add_column("slope [dB/dec]", justify="right")
        for name, m in plans.items():
            table.add_row(
                name,
                str(m.get("n_dac", "-")),
                _fmt(m.get("b_des_hz"), 1e9, 4),
                _fmt(m.get("rms_fm_error_hz"), 1e3),
                _fmt(m.get("phase_error_at_1mhz_dbc"), 1.0, 1),
                _fmt(m.get("phase_error_slope_db_per_decade"), 1.0, 1),
            )
        console.print(table)

    cases = report.get("cases") or {}
    if cases:
        table = Table(title="IF spectra")
        table.add_column("Case", style="cyan")
        table.add_column("f_target [MHz]", justify="right")
        table.add_column("SNDR [dB]", justify="right")
        table.add_column("peak/floor [dB]", justify="right")
        table.add_column("ghost n=1 [dB]", justify="right")
        table.add_column("ghost-free", justify="center")
        for key, m in cases.items():
            table.add_row(
                key,
                _fmt(m.get("f_target_hz"), 1e6, 3),
                _fmt(m.get("sndr_db")),
                _fmt(m.get("peak_to_floor_db")),
                _fmt(m.get("ghost_level_db")),
                "yes" if m.get("ghost_free") else "no",
            )
        console.print(table)

    checks = report.get("checks") or []
    if checks:
        render_checks(checks)


def render_checks(checks: List[Dict[str, Any]]) -> None:
    table = Table(title="Checks")
    table.add_column("Metric", style="cyan")
    table.add_column("Where")
    table.add_column("Value", justify="right")
    table.add_column("Expected", justify="right")
    table.add_column("Result", justify="center")
    for c in checks:
        table.add_row(
            c["metric"],
            c["where"],
            _fmt(c["value"], 1.0, 3),
            f"{c['expected']:.6g} ± {c['tolerance']:.3g}",
            "[green]PASS[/green]" if c["passed"] else "[red]FAIL[/red]",
        )
    console.print(table)


# =============================================================================
# Commands
# =============================================================================


def _run(args: argparse.Namespace, stop_after: str, start_at: str = "chart", source: Optional[Path] = None) -> PipelineResult:
    cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
    logger.info("writing to %s", cfg.output_dir)
    return run_pipeline(cfg, stop_after=stop_after, start_at=start_at, source_dir=source, jobs=args.jobs)


def cmd_stage(args: argparse.Namespace) -> int:
    """Run the pipeline up to one stage, optionally resuming from an earlier run."""
    stage = args.command
    if args.from_dir is not None:
        result = _run(args, stop_after=stage, start_at=stage, source=args.from_dir)
    else:
        result = _run(args, stop_after=stage)
    if stage == "analyze":
        render_report(result.report)
    console.print(f"[green]{stage}[/green] done: {result.manifest_path}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    result = _run(args, stop_after=args.stage)
    render_report(result.report)
    console.print(f"manifest: {result.manifest_path}")
    if args.check:
        if not result.checks:
            err_console.print("[yellow]no checks configured[/yellow]")
        elif not result.checks_passed:
            failed = sum(1 for c in result.checks if not c["passed"])
            err_console.print(f"[red]{failed} check(s) failed[/red]")
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    path = args.path or args.config
    if path is None:
        raise ValidationError("validate needs a config path")
    issues = validate_config_file(path)
    if not issues:
        console.print(f"[green]OK[/green]: {path}")
        return EXIT_OK
    table = Table(title=f"Validation issues: {path}")
    table.add_column("#", justify="right")
    table.add_column("Issue")
    for i, issue in enumerate(issues, start=1):
        table.add_row(str(i), issue)
    console.print(table)
    return EXIT_VALIDATION


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / "report.json"
    try:
        report = load_json(path)
    except (OSError, ValueError) as e:
        raise ValidationError(f"cannot read report {path}: {e}") from e
    render_report(report)
    return EXIT_OK


# =============================================================================
# Parser
# =============================================================================


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", type=Path, required=True, help="Run configuration (YAML)")
    p.add_argument("--out", "-o", type=Path, help="Output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="Master seed (overrides the config)")
    p.add_argument("--jobs", "-j", type=int, default=1, help="Worker threads for plans and cases")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chirp-sim",
        description="Chart-and-chirp VCO predistortion and FMCW radar simulator",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    stage_help = {
        "chart": "Sweep the VCO and record the voltage-frequency chart",
        "learn": "Fit the backward model to the chart",
        "predistort": "Compute predistorted voltages and QDAC codes",
        "synth": "Synthesize tuning voltage and chirp waveforms",
        "simulate": "Simulate the IF signal for every scenario",
        "analyze": "FM error, spectra, spurs and SNDR",
    }
    for stage in STAGES:
        p = subparsers.add_parser(stage, help=stage_help[stage])
        _add_run_options(p)
        p.add_argument(
            "--from",
            dest="from_dir",
            type=Path,
            help="Load earlier stages from this run directory instead of recomputing",
        )
        p.set_defaults(func=cmd_stage)

    p = subparsers.add_parser("run", help="Run the full pipeline")
    _add_run_options(p)
    p.add_argument("--stage", choices=STAGES, default="analyze", help="Stop after this stage")
    p.add_argument("--check", action="store_true", help="Evaluate configured checks (exit 3 on failure)")
    p.set_defaults(func=cmd_run)

    p = subparsers.add_parser("validate", help="Validate a configuration file")
    p.add_argument("path", nargs="?", type=Path, help="Configuration file")
    p.add_argument("--config", "-c", type=Path, help="Configuration file (alternative to the positional)")
    p.set_defaults(func=cmd_validate)

    p = subparsers.add_parser("report", help="Render a metrics report")
    p.add_argument("path", type=Path, help="report.json or a run directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)

    try:
        return args.func(args)
    except StageError as e:
        err_console.print(f"[red]Error:[/red] {e}")
        return EXIT_RUNTIME
    except ValidationError as e:
        err_console.print(f"[red]Invalid:[/red] {e}")
        return EXIT_VALIDATION
    except ChirpToolkitError as e:
        err_console.print(f"[red]Error:[/red] {e}")
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        err_console.print("interrupted")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
