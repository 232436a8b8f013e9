"""
Self-contained simulation scenarios: a device, the gate to compile (or an explicit
schedule), the initial state and the propagation options, all in one config document.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from spinphoton.compiler import compile_cz, compile_ry, compile_rz
from spinphoton.config import (
    FORMAT_VERSION,
    apply_overrides,
    check_keys,
    format_quantity,
    locate,
    parse_document,
    parse_quantity,
    require_int,
    require_number,
    require_str,
)
from spinphoton.device import SECTIONS, DeviceSpec, validate_device
from spinphoton.dynamics import Integrator, PropagationOptions, Trajectory, propagate
from spinphoton.errors import ConfigError, DeviceValidationError, SpinPhotonError, UnknownLabelError
from spinphoton.hilbert import HybridSystem, Picture
from spinphoton.metrics import GateReport, LossReport, gate_matrix, ideal_gate, norm_deficit, overlap_table
from spinphoton.schedule import PulseSchedule

log = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
GATES = ("ry", "rz", "cz", "schedule")
OUTPUTS = ("trajectory", "gate_report", "loss_report")
SWEEP_COLUMNS = ("value", "lambda", "gate_duration_ns", "resonant_time_ns", "norm_deficit", "error")
SCENARIO_SECTIONS = ("scenario", "options", "schedule")


def available_scenarios() -> list[str]:
    return sorted(path.stem for path in SCENARIO_DIR.glob("*.yaml"))


def scenario_source(reference: str | os.PathLike) -> tuple[str, str]:
    """
    Text and display name of a built-in scenario or a scenario file.

    :raises UnknownLabelError: If ``reference`` is neither.
    """
    builtin = SCENARIO_DIR / f"{reference}.yaml"
    if str(reference) in available_scenarios():
        return builtin.read_text(encoding="utf-8"), str(reference)
    path = Path(reference)
    if path.suffix in (".yaml", ".yml") and path.is_file():
        return path.read_text(encoding="utf-8"), str(path)
    msg = f"Unknown scenario `{reference}` (built-in: {', '.join(available_scenarios())})"
    raise UnknownLabelError(msg)


def device_document(document: Mapping[str, Any], source: str = "<scenario>") -> dict[str, Any]:
    """
    The device sections of a scenario document, after rejecting unknown sections.

    :raises ConfigError: If a top-level key is neither a device nor a scenario section.
    """
    unknown = sorted(set(document) - set(SECTIONS) - set(SCENARIO_SECTIONS))
    if unknown:
        msg = f"{source}: unknown section(s) {', '.join(unknown)}"
        raise ConfigError(msg)
    return {key: value for key, value in document.items() if key not in SCENARIO_SECTIONS}


def _require_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        msg = f"{path}: expected true or false"
        raise ConfigError(msg)
    return value


def _options_from_dict(table: Mapping[str, Any]) -> PropagationOptions:
    check_keys(table, "options", optional=("picture", "integrator", "tolerance", "grid", "loss"))
    try:
        return PropagationOptions(
            picture=Picture.parse(require_str(table.get("picture", "interaction"), "options.picture")),
            integrator=Integrator(
                require_str(table.get("integrator", "piecewise-exact"), "options.integrator")
            ),
            tolerance=require_number(table.get("tolerance", 1e-10), "options.tolerance"),
            grid=parse_quantity(table.get("grid", "0.05 ns"), "time", "ns", "options.grid"),
            loss=_require_bool(table.get("loss", False), "options.loss"),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        msg = f"options: {e}"
        raise ConfigError(msg) from e


@dataclass(frozen=True)
class Scenario:
    name: str
    device: DeviceSpec
    gate: str
    description: str = ""
    variant: str = "scalable"
    qubit: str | None = None
    angle: float = math.pi
    ramp_time: float = 0.0
    excitation_cap: int | None = None
    initial: str = "00"
    labels: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ("trajectory", "gate_report")
    options: PropagationOptions = field(default_factory=PropagationOptions)
    schedule: PulseSchedule | None = None

    @classmethod
    def from_document(cls, document: Mapping[str, Any], source: str = "<scenario>") -> Scenario:
        device = device_document(document, source)
        table = check_keys(
            document.get("scenario"),
            "scenario",
            required=("name", "gate"),
            optional=(
                "description",
                "variant",
                "qubit",
                "angle",
                "ramp",
                "excitation_cap",
                "initial",
                "labels",
                "outputs",
            ),
        )
        gate = require_str(table["gate"], "scenario.gate")
        if gate not in GATES:
            msg = f"scenario.gate: expected one of {', '.join(GATES)}, got {gate!r}"
            raise ConfigError(msg)
        schedule = None
        if "schedule" in document:
            schedule = PulseSchedule.from_dict(document["schedule"])
        if gate == "schedule" and schedule is None:
            msg = "schedule: required when scenario.gate is `schedule`"
            raise ConfigError(msg)
        outputs = tuple(table.get("outputs", ("trajectory", "gate_report")))
        for output in outputs:
            if output not in OUTPUTS:
                msg = f"scenario.outputs: unknown output {output!r}"
                raise ConfigError(msg)
        return cls(
            name=require_str(table["name"], "scenario.name"),
            description=require_str(table.get("description", ""), "scenario.description"),
            device=DeviceSpec.from_dict(device),
            gate=gate,
            variant=require_str(table.get("variant", "scalable"), "scenario.variant"),
            qubit=require_str(table["qubit"], "scenario.qubit") if "qubit" in table else None,
            angle=parse_quantity(table.get("angle", "180 deg"), "angle", "rad", "scenario.angle"),
            ramp_time=parse_quantity(table.get("ramp", "0 ns"), "time", "ns", "scenario.ramp"),
            excitation_cap=(
                require_int(table["excitation_cap"], "scenario.excitation_cap")
                if "excitation_cap" in table
                else None
            ),
            initial=require_str(table.get("initial", "00"), "scenario.initial"),
            labels=tuple(require_str(x, "scenario.labels") for x in table.get("labels", [])),
            outputs=outputs,
            options=_options_from_dict(document.get("options", {})),
            schedule=schedule,
        )

    @property
    def target_qubit(self) -> str:
        if self.qubit is not None:
            return self.qubit
        if not self.device.qubits:
            msg = f"scenario {self.name}: device defines no qubits"
            raise ConfigError(msg)
        return self.device.qubits[0].label

    def system(self) -> HybridSystem:
        return HybridSystem.build(self.device, self.excitation_cap)

    def compile(self, system: HybridSystem | None = None) -> PulseSchedule:
        if self.gate == "ry":
            return compile_ry(self.device, self.target_qubit, self.angle, ramp_time=self.ramp_time)
        if self.gate == "rz":
            return compile_rz(self.device, self.target_qubit, self.angle, ramp_time=self.ramp_time)
        if self.gate == "cz":
            return compile_cz(self.device, self.variant, system=system)  # type: ignore[arg-type]
        if self.schedule is None:
            msg = f"scenario {self.name}: no schedule to run"
            raise ConfigError(msg)
        return self.schedule

    def target_gate(self) -> np.ndarray:
        qubits = len(self.device.qubits)
        if self.gate in ("ry", "rz"):
            index = [q.label for q in self.device.qubits].index(self.target_qubit)
            return ideal_gate(self.gate, self.angle, qubit=index, qubits=qubits)
        if self.gate == "cz":
            return ideal_gate("cz")
        return ideal_gate("identity", qubits=qubits)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "gate": self.gate,
            "variant": self.variant,
            "qubit": self.qubit,
            "angle": format_quantity(self.angle, "angle", "rad"),
            "ramp": format_quantity(self.ramp_time, "time", "ns"),
            "initial": self.initial,
            "labels": list(self.labels),
            "outputs": list(self.outputs),
        }


def load_scenario(
    reference: str | os.PathLike, overrides: Mapping[str, str] | None = None
) -> Scenario:
    """
    Load a built-in scenario by name, or a scenario file, applying dotted-path overrides.

    :raises ConfigError: On malformed documents or overrides.
    :raises DeviceValidationError: If the (overridden) device breaks an invariant.
    """
    text, source = scenario_source(reference)
    document = apply_overrides(parse_document(text, source), overrides or {})
    scenario = Scenario.from_document(document, source)
    report = validate_device(scenario.device)
    if not report.ok:
        raise DeviceValidationError(report)
    return scenario


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    schedule: PulseSchedule
    trajectory: Trajectory
    report: GateReport | None = None
    loss: LossReport | None = None
    warnings: tuple[str, ...] = ()

    @property
    def fidelity_loss(self) -> float | None:
        return self.report.fidelity_loss if self.report is not None else None

    def summary(self) -> dict[str, Any]:
        summary: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "scenario": self.scenario.to_dict(),
            "device": self.scenario.device.to_dict(),
            "gate": self.scenario.gate,
            "lambda": self.fidelity_loss,
            "gate_duration_ns": self.schedule.duration,
            "max_norm_drift": self.trajectory.max_norm_drift,
            "excitation_drift": self.trajectory.excitation_drift,
            "norm_deficit": float(1.0 - self.trajectory.norms[-1]),
            "schedule": self.schedule.to_dict(),
            "gate_report": self.report.to_dict() if self.report is not None else None,
            "options": self.scenario.options.to_dict(),
            "warnings": list(self.warnings),
        }
        if self.loss is not None:
            summary["loss_report"] = self.loss.to_dict()
        return summary


def run_scenario(scenario: Scenario) -> ScenarioResult:
    """
    Compile the scenario's gate, propagate its initial state and evaluate the gate.
    """
    system = scenario.system()
    schedule = scenario.compile(system)
    log.info(
        "Scenario %s: %d-state basis, %s lasting %.4f ns",
        scenario.name,
        system.dimension,
        schedule.name or scenario.gate,
        schedule.duration,
    )
    trajectory = propagate(scenario.initial, system, schedule, options=scenario.options)
    report = None
    if "gate_report" in scenario.outputs and scenario.device.qubits:
        # gate phases are only meaningful in the interaction picture
        gate_options = replace(scenario.options, picture=Picture.INTERACTION)
        report = gate_matrix(system, schedule, scenario.target_gate(), gate_options)
    loss = norm_deficit(trajectory) if "loss_report" in scenario.outputs else None
    validation = validate_device(scenario.device)
    return ScenarioResult(
        scenario=scenario,
        schedule=schedule,
        trajectory=trajectory,
        report=report,
        loss=loss,
        warnings=tuple(validation.warnings) + schedule.warnings,
    )


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, prefix=f".{path.name}.", delete=False
    ) as handle:
        handle.write(text)
        temporary = handle.name
    os.replace(temporary, path)


def write_table(table: pd.DataFrame, path: Path) -> Path:
    _atomic_write(path, table.to_csv(index=False, float_format="%.12e", lineterminator="\n"))
    return path


def write_json(data: Mapping[str, Any], path: Path) -> Path:
    _atomic_write(path, json.dumps(data, sort_keys=True, indent=2) + "\n")
    return path


def write_result(result: ScenarioResult, directory: Path) -> list[Path]:
    """
    Write ``<name>_trajectory.csv`` (when requested) and ``<name>_summary.json``.
    """
    name = result.scenario.name
    written = []
    if "trajectory" in result.scenario.outputs:
        labels = result.scenario.labels or None
        table = overlap_table(result.trajectory, labels)
        written.append(write_table(table, directory / f"{name}_trajectory.csv"))
    written.append(write_json(result.summary(), directory / f"{name}_summary.json"))
    for path in written:
        log.info("Wrote %s", path)
    return written


def _sweep_row(task: tuple[str, dict[str, str], str, str]) -> dict[str, Any]:
    reference, overrides, parameter, value = task
    row: dict[str, Any] = dict.fromkeys(SWEEP_COLUMNS, math.nan)
    row["value"] = value
    row["error"] = ""
    try:
        scenario = load_scenario(reference, {**overrides, parameter: value})
        result = run_scenario(scenario)
    except (SpinPhotonError, ValueError) as e:
        log.warning("Sweep %s=%s failed: %s", parameter, value, e)
        row["error"] = f"{type(e).__name__}: {e}"
        return row
    row["lambda"] = result.fidelity_loss if result.fidelity_loss is not None else math.nan
    row["gate_duration_ns"] = result.schedule.duration
    row["resonant_time_ns"] = result.schedule.resonant_time
    row["norm_deficit"] = float(1.0 - result.trajectory.norms[-1])
    log.info("Sweep %s=%s: lambda %s", parameter, value, row["lambda"])
    return row


def sweep(
    reference: str | os.PathLike,
    parameter: str,
    values: Sequence[str] | Iterable[str],
    overrides: Mapping[str, str] | None = None,
    processes: int = 1,
) -> pd.DataFrame:
    """
    Run a scenario once per value of one dotted config path.

    Rows are independent; a failing row carries an ``error`` tag and does not stop the
    sweep.

    :param reference: Built-in scenario name or scenario file.
    :param parameter: Dotted config path, as for overrides.
    :param values: Raw values, each applied like an override.
    :param overrides: Further overrides applied to every row.
    :param processes: Worker processes; 1 runs in-process.
    :returns: One row per value, in input order.
    :raises UnknownLabelError: If ``reference`` is not a scenario.
    :raises ConfigError: If ``parameter`` or an override path does not exist in it.
    """
    text, source = scenario_source(reference)
    document = parse_document(text, source)
    for path in (*(overrides or {}), parameter):
        locate(document, path)
    tasks = [(str(reference), dict(overrides or {}), parameter, str(v)) for v in values]
    if not tasks:
        return pd.DataFrame(columns=list(SWEEP_COLUMNS))
    if processes > 1:
        with Pool(processes) as pool:
            rows = pool.map(_sweep_row, tasks)
    else:
        rows = [_sweep_row(task) for task in tasks]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
