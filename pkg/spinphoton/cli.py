"""
Command-line front end: run and sweep scenarios, validate configs, inspect CPB spectra.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from spinphoton.config import parse_document, parse_override
from spinphoton.device import DeviceSpec, cpb_spectrum, validate_device
from spinphoton.dynamics import Integrator
from spinphoton.errors import ConfigError, NumericalError, SpinPhotonError
from spinphoton.hilbert import Picture
from spinphoton.scenarios import (
    available_scenarios,
    device_document,
    load_scenario,
    run_scenario,
    scenario_source,
    sweep,
    write_result,
    write_table,
)

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "SPINPHOTON_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

console = Console()


def _output_dir(value: str | None) -> Path:
    return Path(value or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def _overrides(items: Sequence[str] | None) -> dict[str, str]:
    return dict(parse_override(item) for item in items or ())


def _run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario, _overrides(args.override))
    changes = {}
    if args.grid is not None:
        changes["grid"] = args.grid
    if args.tol is not None:
        changes["tolerance"] = args.tol
    if args.picture is not None:
        changes["picture"] = Picture.parse(args.picture)
    if args.integrator is not None:
        changes["integrator"] = Integrator(args.integrator)
    if changes:
        try:
            scenario = replace(scenario, options=replace(scenario.options, **changes))
        except ValueError as e:
            msg = f"options: {e}"
            raise ConfigError(msg) from e

    result = run_scenario(scenario)
    written = write_result(result, _output_dir(args.out))

    table = Table(title=f"{scenario.name}: {scenario.gate}", header_style="bold")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    if result.fidelity_loss is not None:
        table.add_row("lambda", f"{result.fidelity_loss:.3e}")
    table.add_row("gate duration", f"{result.schedule.duration:.4f} ns")
    table.add_row("max norm drift", f"{result.trajectory.max_norm_drift:.2e}")
    table.add_row("excitation drift", f"{result.trajectory.excitation_drift:.2e}")
    if result.loss is not None:
        table.add_row("norm deficit", f"{result.loss.deficit:.3e}")
    console.print(table)
    for warning in result.warnings:
        console.print(f"[yellow]warning:[/yellow] {warning}")
    for path in written:
        console.print(f"wrote {path}")
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    table = sweep(
        args.scenario,
        args.param,
        values,
        overrides=_overrides(args.override),
        processes=args.processes,
    )
    name = Path(str(args.scenario)).stem
    path = write_table(table, _output_dir(args.out) / f"{name}_sweep.csv")

    view = Table(title=f"{name}: {args.param}", header_style="bold")
    for column in table.columns:
        view.add_column(str(column))
    for row in table.itertuples(index=False):
        view.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
    console.print(view)
    console.print(f"wrote {path}")
    failed = int((table["error"] != "").sum()) if len(table) else 0
    if failed:
        console.print(f"[yellow]{failed} of {len(table)} row(s) failed[/yellow]")
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    text, source = scenario_source(args.config)
    device = DeviceSpec.from_dict(device_document(parse_document(text, source), source))
    report = validate_device(device)
    table = Table(title=f"{device.name or source}", header_style="bold")
    table.add_column("level")
    table.add_column("finding")
    for error in report.errors:
        table.add_row("[red]error[/red]", error)
    for warning in report.warnings:
        table.add_row("[yellow]warning[/yellow]", warning)
    if report.errors or report.warnings:
        console.print(table)
    console.print(
        f"{source}: {len(report.errors)} error(s), {len(report.warnings)} warning(s)"
    )
    return EXIT_OK if report.ok else EXIT_INVALID


def _cpb_spectrum(args: argparse.Namespace) -> int:
    two_pi = 2 * np.pi
    levels = cpb_spectrum(
        two_pi * args.ec, two_pi * args.ej, args.ng, charge_cutoff=args.cutoff
    )
    table = Table(title=f"CPB  E_C={args.ec} GHz  E_J={args.ej} GHz  n_g={args.ng}")
    table.add_column("quantity")
    table.add_column("GHz", justify="right")
    for j, energy in enumerate(levels.energies):
        table.add_row(f"E_{j}", f"{energy / two_pi:.9f}")
    table.add_row("gap 0-1", f"{levels.gap_01 / two_pi:.9f}")
    table.add_row("gap 1-2", f"{levels.gap_12 / two_pi:.9f}")
    console.print(table)
    anharmonicity = abs(levels.gap_01 - levels.gap_12) / levels.gap_01
    console.print(f"relative anharmonicity {anharmonicity:.4f}")
    return EXIT_OK


def _scenarios(_: argparse.Namespace) -> int:
    table = Table(header_style="bold")
    table.add_column("name")
    table.add_column("gate")
    table.add_column("description")
    for name in available_scenarios():
        scenario = load_scenario(name)
        table.add_row(name, scenario.gate, scenario.description)
    console.print(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinphoton", description="Pulse-level hybrid spin-photon qubit simulator"
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a scenario and write its outputs")
    run.add_argument("scenario", help="built-in scenario name or scenario file")
    run.add_argument("--override", action="append", metavar="KEY=VALUE", help="dotted config path")
    run.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or ./results)")
    run.add_argument("--grid", type=float, help="output grid spacing in ns")
    run.add_argument("--tol", type=float, help="integrator tolerance")
    run.add_argument("--picture", choices=[p.value for p in Picture])
    run.add_argument("--integrator", choices=[i.value for i in Integrator])
    run.set_defaults(handler=_run)

    sweep_parser = commands.add_parser("sweep", help="run a scenario once per parameter value")
    sweep_parser.add_argument("scenario")
    sweep_parser.add_argument("--param", required=True, help="dotted config path")
    sweep_parser.add_argument("--values", required=True, help="comma-separated values")
    sweep_parser.add_argument("--override", action="append", metavar="KEY=VALUE")
    sweep_parser.add_argument("--processes", type=int, default=1)
    sweep_parser.add_argument("--out")
    sweep_parser.set_defaults(handler=_sweep)

    validate = commands.add_parser("validate", help="check a device or scenario config")
    validate.add_argument("config")
    validate.set_defaults(handler=_validate)

    spectrum = commands.add_parser("cpb-spectrum", help="lowest Cooper-pair box levels")
    spectrum.add_argument("--ec", type=float, required=True, help="E_C/2pi in GHz")
    spectrum.add_argument("--ej", type=float, required=True, help="E_J/2pi in GHz")
    spectrum.add_argument("--ng", type=float, default=0.5, help="gate charge")
    spectrum.add_argument("--cutoff", type=int, default=20, help="charge cutoff n_max")
    spectrum.set_defaults(handler=_cpb_spectrum)

    listing = commands.add_parser("scenarios", help="list the built-in scenarios")
    listing.set_defaults(handler=_scenarios)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, format="%(message)s", handlers=[RichHandler(console=console)], force=True
    )
    try:
        return args.handler(args)
    except NumericalError as e:
        log.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except (SpinPhotonError, ValueError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_INVALID
    except OSError as e:
        log.error("I/O failure: %s", e)
        return EXIT_IO
