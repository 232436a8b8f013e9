from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy import linalg

from spinphoton.config import (
    check_keys,
    format_quantity,
    parse_document,
    parse_quantity,
    require_int,
    require_number,
    require_str,
    require_mapping,
)
from spinphoton.errors import ConfigError, CPBConvergenceError

log = logging.getLogger(__name__)

DEFAULT_TUNING_RANGE = 0.1
DEFAULT_CHARGE_CUTOFF = 20
# idle detunings below this many couplings are reported as warnings
IDLE_RATIO = 10.0
CPB_LEVELS = 3
_CONVERGENCE = 1e-10
SECTIONS = ("format_version", "device", "modes", "spins", "cpb", "hops", "loss", "qubits", "states")


@dataclass(frozen=True)
class ModeSpec:
    """
    One tunable resonator mode, the ``harmonic``-th harmonic of its parent cavity.
    """

    label: str
    fundamental: float
    harmonic: int = 1
    tuning_range: float = DEFAULT_TUNING_RANGE

    @property
    def idle_frequency(self) -> float:
        return self.harmonic * self.fundamental

    @property
    def max_detuning(self) -> float:
        return self.tuning_range * self.idle_frequency

    def within_bounds(self, detuning: float) -> bool:
        return abs(detuning) <= self.max_detuning * (1 + 1e-12)


@dataclass(frozen=True)
class SpinEnsembleSpec:
    label: str
    gap: float
    coupling: float
    mode: str
    count: float | None = None
    single_coupling: float | None = None


@dataclass(frozen=True)
class CPBCoupling:
    mode: str
    transition: int
    strength: float


@dataclass(frozen=True)
class CPBLevels:
    energies: tuple[float, float, float]
    charge_elements: tuple[float, float] | None = None

    @property
    def gap_01(self) -> float:
        return self.energies[1] - self.energies[0]

    @property
    def gap_12(self) -> float:
        return self.energies[2] - self.energies[1]

    @property
    def gaps(self) -> tuple[float, float]:
        return self.gap_01, self.gap_12


@dataclass(frozen=True)
class CPBSpec:
    """
    The Cooper-pair box, truncated to its lowest three levels.

    Either ``gaps`` is given directly, or the charge-basis parameters are, in which case
    the gaps come from :func:`cpb_spectrum`.
    """

    couplings: tuple[CPBCoupling, ...] = ()
    gaps: tuple[float, float] | None = None
    charging_energy: float | None = None
    josephson_energy: float | None = None
    gate_charge: float = 0.5
    charge_cutoff: int = DEFAULT_CHARGE_CUTOFF

    @cached_property
    def levels(self) -> CPBLevels:
        if self.gaps is not None:
            gap_01, gap_12 = self.gaps
            return CPBLevels((0.0, gap_01, gap_01 + gap_12))
        if self.charging_energy is None or self.josephson_energy is None:
            msg = "CPB needs either gaps or charging/Josephson energies"
            raise ValueError(msg)
        return cpb_spectrum(
            self.charging_energy, self.josephson_energy, self.gate_charge, self.charge_cutoff
        )


@dataclass(frozen=True)
class HoppingLink:
    modes: tuple[str, str]
    rate: float


@dataclass(frozen=True)
class QubitSpec:
    """
    A hybrid qubit: ``|0>`` is one spin excitation in ``spin``, ``|1>`` one photon in ``mode``.
    """

    label: str
    spin: str
    mode: str


@dataclass(frozen=True)
class NamedState:
    label: str
    photons: tuple[tuple[str, int], ...] = ()
    spins: tuple[tuple[str, int], ...] = ()
    cpb: int = 0


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    modes: tuple[ModeSpec, ...]
    spins: tuple[SpinEnsembleSpec, ...] = ()
    cpb: CPBSpec | None = None
    hops: tuple[HoppingLink, ...] = ()
    loss: Mapping[str, float] = field(default_factory=dict)
    qubits: tuple[QubitSpec, ...] = ()
    states: tuple[NamedState, ...] = ()
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "loss", dict(self.loss))

    @property
    def mode_labels(self) -> tuple[str, ...]:
        return tuple(mode.label for mode in self.modes)

    @property
    def spin_labels(self) -> tuple[str, ...]:
        return tuple(spin.label for spin in self.spins)

    def mode(self, label: str) -> ModeSpec:
        for mode in self.modes:
            if mode.label == label:
                return mode
        msg = f"Unknown mode `{label}`"
        raise KeyError(msg)

    def spin(self, label: str) -> SpinEnsembleSpec:
        for spin in self.spins:
            if spin.label == label:
                return spin
        msg = f"Unknown spin ensemble `{label}`"
        raise KeyError(msg)

    def qubit(self, label: str) -> QubitSpec:
        for qubit in self.qubits:
            if qubit.label == label:
                return qubit
        msg = f"Unknown qubit `{label}`"
        raise KeyError(msg)

    def named_state(self, label: str) -> NamedState:
        for state in self.states:
            if state.label == label:
                return state
        msg = f"Unknown named state `{label}`"
        raise KeyError(msg)

    def loss_rate(self, mode: str) -> float:
        return self.loss.get(mode, 0.0)

    @property
    def is_lossy(self) -> bool:
        return any(rate > 0 for rate in self.loss.values())

    def hop_partners(self, mode: str) -> list[tuple[str, float]]:
        partners = []
        for hop in self.hops:
            if mode in hop.modes:
                other = hop.modes[1] if hop.modes[0] == mode else hop.modes[0]
                partners.append((other, hop.rate))
        return partners

    def cpb_couplings(self, mode: str) -> list[CPBCoupling]:
        if self.cpb is None:
            return []
        return [c for c in self.cpb.couplings if c.mode == mode]

    def spins_on(self, mode: str) -> list[SpinEnsembleSpec]:
        return [spin for spin in self.spins if spin.mode == mode]

    def to_dict(self) -> dict[str, Any]:
        """
        Serializes the device into the config document layout.

        :returns:
            Dictionary with unit-bearing string quantities.
        """
        document: dict[str, Any] = {
            "device": {"name": self.name, "description": self.description},
            "modes": {
                mode.label: {
                    "fundamental": format_quantity(mode.fundamental, "frequency", "GHz"),
                    "harmonic": mode.harmonic,
                    "tuning_range": mode.tuning_range,
                }
                for mode in self.modes
            },
        }
        if self.spins:
            spins: dict[str, Any] = {}
            for spin in self.spins:
                entry: dict[str, Any] = {
                    "gap": format_quantity(spin.gap, "frequency", "GHz"),
                    "Gbar": format_quantity(spin.coupling, "frequency", "MHz"),
                    "mode": spin.mode,
                }
                if spin.count is not None:
                    entry["count"] = spin.count
                if spin.single_coupling is not None:
                    entry["g"] = format_quantity(spin.single_coupling, "frequency", "Hz")
                spins[spin.label] = entry
            document["spins"] = spins
        if self.cpb is not None:
            cpb: dict[str, Any] = {}
            if self.cpb.gaps is not None:
                cpb["gaps"] = [format_quantity(g, "frequency", "GHz") for g in self.cpb.gaps]
            else:
                cpb["charging_energy"] = format_quantity(
                    self.cpb.charging_energy or 0.0, "frequency", "GHz"
                )
                cpb["josephson_energy"] = format_quantity(
                    self.cpb.josephson_energy or 0.0, "frequency", "GHz"
                )
                cpb["gate_charge"] = self.cpb.gate_charge
                cpb["charge_cutoff"] = self.cpb.charge_cutoff
            cpb["couplings"] = [
                {
                    "mode": c.mode,
                    "transition": c.transition,
                    "G": format_quantity(c.strength, "frequency", "MHz"),
                }
                for c in self.cpb.couplings
            ]
            document["cpb"] = cpb
        if self.hops:
            document["hops"] = [
                {"modes": list(h.modes), "kappa": format_quantity(h.rate, "frequency", "MHz")}
                for h in self.hops
            ]
        if self.loss:
            document["loss"] = {
                label: format_quantity(rate, "frequency", "MHz")
                for label, rate in self.loss.items()
            }
        if self.qubits:
            document["qubits"] = [
                {"label": q.label, "spin": q.spin, "mode": q.mode} for q in self.qubits
            ]
        if self.states:
            document["states"] = {
                s.label: {"photons": dict(s.photons), "spins": dict(s.spins), "cpb": s.cpb}
                for s in self.states
            }
        return document

    @classmethod
    def from_dict(cls, document: Mapping[str, Any]) -> DeviceSpec:
        """
        Builds a device from the config document layout.

        Structural problems raise :class:`ConfigError`; physical inconsistencies are left
        to :func:`validate_device`.

        :param document:
            Parsed config holding device sections only; unknown sections are rejected.
        :returns:
            The device.
        """
        unknown = sorted(set(document) - set(SECTIONS))
        if unknown:
            msg = f"unknown section(s) {', '.join(unknown)}"
            raise ConfigError(msg)
        header = check_keys(document.get("device", {}), "device", optional=("name", "description"))
        modes_table = require_mapping(document.get("modes", {}), "modes")
        if not modes_table:
            msg = "modes: no modes defined"
            raise ConfigError(msg)

        modes = []
        for label, entry in modes_table.items():
            path = f"modes.{label}"
            check_keys(entry, path, required=("fundamental",), optional=("harmonic", "tuning_range"))
            modes.append(
                ModeSpec(
                    label=label,
                    fundamental=parse_quantity(
                        entry["fundamental"], "frequency", "GHz", f"{path}.fundamental"
                    ),
                    harmonic=require_int(entry.get("harmonic", 1), f"{path}.harmonic"),
                    tuning_range=require_number(
                        entry.get("tuning_range", DEFAULT_TUNING_RANGE), f"{path}.tuning_range"
                    ),
                )
            )

        spins = []
        spins_table = require_mapping(document.get("spins", {}), "spins")
        for label, entry in spins_table.items():
            path = f"spins.{label}"
            check_keys(entry, path, required=("gap", "Gbar", "mode"), optional=("count", "g"))
            spins.append(
                SpinEnsembleSpec(
                    label=label,
                    gap=parse_quantity(entry["gap"], "frequency", "GHz", f"{path}.gap"),
                    coupling=parse_quantity(entry["Gbar"], "frequency", "MHz", f"{path}.Gbar"),
                    mode=require_str(entry["mode"], f"{path}.mode"),
                    count=(
                        require_number(entry["count"], f"{path}.count")
                        if "count" in entry
                        else None
                    ),
                    single_coupling=(
                        parse_quantity(entry["g"], "frequency", "Hz", f"{path}.g")
                        if "g" in entry
                        else None
                    ),
                )
            )

        cpb = None
        if "cpb" in document:
            cpb = _cpb_from_dict(document["cpb"])

        hops = []
        for i, entry in enumerate(document.get("hops", [])):
            path = f"hops.{i}"
            check_keys(entry, path, required=("modes", "kappa"))
            pair = entry["modes"]
            if not isinstance(pair, list) or len(pair) != 2:  # noqa: PLR2004
                msg = f"{path}.modes: expected a pair of mode labels"
                raise ConfigError(msg)
            hops.append(
                HoppingLink(
                    modes=(require_str(pair[0], f"{path}.modes"), require_str(pair[1], f"{path}.modes")),
                    rate=parse_quantity(entry["kappa"], "frequency", "MHz", f"{path}.kappa"),
                )
            )

        loss_table = require_mapping(document.get("loss", {}), "loss")
        loss = {
            label: parse_quantity(value, "frequency", "MHz", f"loss.{label}")
            for label, value in loss_table.items()
        }

        qubits = []
        for i, entry in enumerate(document.get("qubits", [])):
            path = f"qubits.{i}"
            check_keys(entry, path, required=("label", "spin", "mode"))
            qubits.append(
                QubitSpec(
                    label=require_str(entry["label"], f"{path}.label"),
                    spin=require_str(entry["spin"], f"{path}.spin"),
                    mode=require_str(entry["mode"], f"{path}.mode"),
                )
            )

        states = []
        states_table = require_mapping(document.get("states", {}), "states")
        for label, entry in states_table.items():
            path = f"states.{label}"
            check_keys(entry, path, optional=("photons", "spins", "cpb"))
            states.append(
                NamedState(
                    label=label,
                    photons=_occupations(entry.get("photons", {}), f"{path}.photons"),
                    spins=_occupations(entry.get("spins", {}), f"{path}.spins"),
                    cpb=require_int(entry.get("cpb", 0), f"{path}.cpb"),
                )
            )

        return cls(
            name=require_str(header.get("name", "device"), "device.name"),
            description=require_str(header.get("description", ""), "device.description"),
            modes=tuple(modes),
            spins=tuple(spins),
            cpb=cpb,
            hops=tuple(hops),
            loss=loss,
            qubits=tuple(qubits),
            states=tuple(states),
        )


def _occupations(table: Any, path: str) -> tuple[tuple[str, int], ...]:
    table = require_mapping(table, path)
    return tuple((label, require_int(n, f"{path}.{label}")) for label, n in table.items())


def _cpb_from_dict(entry: Any) -> CPBSpec:
    check_keys(
        entry,
        "cpb",
        optional=(
            "gaps",
            "charging_energy",
            "josephson_energy",
            "gate_charge",
            "charge_cutoff",
            "couplings",
        ),
    )
    couplings = []
    for i, item in enumerate(entry.get("couplings", [])):
        path = f"cpb.couplings.{i}"
        check_keys(item, path, required=("mode", "transition", "G"))
        couplings.append(
            CPBCoupling(
                mode=require_str(item["mode"], f"{path}.mode"),
                transition=require_int(item["transition"], f"{path}.transition"),
                strength=parse_quantity(item["G"], "frequency", "MHz", f"{path}.G"),
            )
        )

    if "gaps" in entry:
        if "charging_energy" in entry or "josephson_energy" in entry:
            msg = "cpb: give either gaps or charging/Josephson energies, not both"
            raise ConfigError(msg)
        gaps = entry["gaps"]
        if not isinstance(gaps, list) or len(gaps) != 2:  # noqa: PLR2004
            msg = "cpb.gaps: expected two transition frequencies"
            raise ConfigError(msg)
        return CPBSpec(
            couplings=tuple(couplings),
            gaps=(
                parse_quantity(gaps[0], "frequency", "GHz", "cpb.gaps.0"),
                parse_quantity(gaps[1], "frequency", "GHz", "cpb.gaps.1"),
            ),
        )
    if "charging_energy" not in entry or "josephson_energy" not in entry:
        msg = "cpb: missing gaps or charging_energy/josephson_energy"
        raise ConfigError(msg)
    return CPBSpec(
        couplings=tuple(couplings),
        charging_energy=parse_quantity(
            entry["charging_energy"], "frequency", "GHz", "cpb.charging_energy"
        ),
        josephson_energy=parse_quantity(
            entry["josephson_energy"], "frequency", "GHz", "cpb.josephson_energy"
        ),
        gate_charge=require_number(entry.get("gate_charge", 0.5), "cpb.gate_charge"),
        charge_cutoff=require_int(
            entry.get("charge_cutoff", DEFAULT_CHARGE_CUTOFF), "cpb.charge_cutoff"
        ),
    )


def load_device(text: str, source: str = "<config>") -> DeviceSpec:
    """
    Parse a device config document.

    :param text: YAML text in the documented config format.
    :param source: Name used in error messages.
    :returns: The device, with all quantities in internal units.
    :raises ConfigError: On syntax errors, bad units or unknown keys.
    """
    return DeviceSpec.from_dict(parse_document(text, source))


def charge_hamiltonian(
    charging_energy: float, josephson_energy: float, gate_charge: float, charges: np.ndarray
) -> np.ndarray:
    """
    Dense CPB Hamiltonian over the given charge states, which must be consecutive
    (ascending or descending).
    """
    charges = np.asarray(charges, dtype=float)
    hamiltonian = np.diag(4.0 * charging_energy * (charges - gate_charge) ** 2)
    off = np.full(len(charges) - 1, -josephson_energy / 2.0)
    hamiltonian += np.diag(off, 1) + np.diag(off, -1)
    return hamiltonian


def _lowest_levels(
    charging_energy: float, josephson_energy: float, gate_charge: float, cutoff: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    charges = np.arange(-cutoff, cutoff + 1)
    hamiltonian = charge_hamiltonian(charging_energy, josephson_energy, gate_charge, charges)
    energies, vectors = linalg.eigh(hamiltonian, subset_by_index=[0, CPB_LEVELS - 1])
    return energies, vectors, charges


def cpb_spectrum(
    charging_energy: float,
    josephson_energy: float,
    gate_charge: float = 0.5,
    charge_cutoff: int = DEFAULT_CHARGE_CUTOFF,
) -> CPBLevels:
    """
    Three lowest levels of the Cooper-pair box in the charge basis ``n = -n_max..n_max``.

    The result is checked against a calculation at twice the cutoff.

    :param charging_energy: E_C in rad/ns.
    :param josephson_energy: E_J in rad/ns.
    :param gate_charge: Dimensionless offset charge n_g.
    :param charge_cutoff: n_max, at least 3.
    :returns: Levels, gaps and charge matrix elements.
    :raises CPBConvergenceError: If doubling the cutoff moves a gap by more than 1e-10
        relative.
    """
    if charge_cutoff < 3:  # noqa: PLR2004
        msg = f"charge cutoff must be at least 3, got {charge_cutoff}"
        raise ValueError(msg)
    if charging_energy <= 0:
        msg = "charging energy must be positive"
        raise ValueError(msg)
    if josephson_energy < 0:
        msg = "Josephson energy must be non-negative"
        raise ValueError(msg)

    energies, vectors, charges = _lowest_levels(
        charging_energy, josephson_energy, gate_charge, charge_cutoff
    )
    reference, _, _ = _lowest_levels(
        charging_energy, josephson_energy, gate_charge, 2 * charge_cutoff
    )
    for name, gap, check in (
        ("gap 0-1", energies[1] - energies[0], reference[1] - reference[0]),
        ("gap 1-2", energies[2] - energies[1], reference[2] - reference[1]),
    ):
        change = abs(gap - check)
        if change > _CONVERGENCE * max(abs(check), charging_energy):
            raise CPBConvergenceError(name, change)

    number = np.diag(charges.astype(float))
    elements = tuple(
        float(abs(vectors[:, j] @ number @ vectors[:, j + 1])) for j in range(CPB_LEVELS - 1)
    )
    log.debug("CPB levels %s (cutoff %d)", energies, charge_cutoff)
    return CPBLevels(
        energies=(float(energies[0]), float(energies[1]), float(energies[2])),
        charge_elements=(elements[0], elements[1]),
    )


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict[str, Any]:
        return {"errors": list(self.errors), "warnings": list(self.warnings)}


def _duplicates(labels: list[str]) -> list[str]:
    return sorted(label for label, n in Counter(labels).items() if n > 1)


def _ratio(detuning: float, coupling: float) -> float:
    if coupling <= 0:
        return math.inf
    return abs(detuning) / coupling


def validate_device(device: DeviceSpec) -> ValidationReport:  # noqa: C901, PLR0912, PLR0915
    """
    Check a device's invariants and its idle-regime conditions.

    Broken invariants are errors; idle detunings or CPB anharmonicity smaller than ten
    times the relevant coupling are warnings. Findings are listed in a fixed order.

    :param device: The device to check.
    :returns: The report; this function does not raise.
    """
    report = ValidationReport()
    errors, warnings = report.errors, report.warnings

    if not device.modes:
        errors.append("no modes defined")
    for kind, labels in (
        ("mode", list(device.mode_labels)),
        ("spin ensemble", list(device.spin_labels)),
        ("qubit", [q.label for q in device.qubits]),
        ("named state", [s.label for s in device.states]),
    ):
        errors.extend(f"duplicate {kind} label `{label}`" for label in _duplicates(labels))

    mode_labels = set(device.mode_labels)
    spin_labels = set(device.spin_labels)

    for mode in device.modes:
        if mode.fundamental <= 0:
            errors.append(f"mode {mode.label}: fundamental frequency must be positive")
        if mode.harmonic < 1:
            errors.append(f"mode {mode.label}: harmonic index must be >= 1")
        if mode.tuning_range <= 0:
            errors.append(f"mode {mode.label}: tuning range must be positive")

    for spin in device.spins:
        if spin.coupling <= 0:
            errors.append(f"spin ensemble {spin.label}: collective coupling must be positive")
        if spin.gap <= 0:
            errors.append(f"spin ensemble {spin.label}: gap must be positive")
        if spin.mode not in mode_labels:
            errors.append(f"spin ensemble {spin.label}: unknown mode `{spin.mode}`")
        elif spin.coupling > 0:
            detuning = device.mode(spin.mode).idle_frequency - spin.gap
            ratio = _ratio(detuning, spin.coupling)
            if ratio < IDLE_RATIO:
                warnings.append(
                    f"idle resonance: spin ensemble {spin.label} is detuned from mode "
                    f"{spin.mode} by only {ratio:.3g} couplings"
                )
        if (spin.count is None) != (spin.single_coupling is None):
            errors.append(f"spin ensemble {spin.label}: give both count and g, or neither")
        elif spin.count is not None and spin.single_coupling is not None:
            if spin.count <= 0:
                errors.append(f"spin ensemble {spin.label}: spin count must be positive")
            else:
                expected = math.sqrt(spin.count) * spin.single_coupling
                if spin.coupling <= 0 or abs(spin.coupling - expected) / spin.coupling >= 1e-12:
                    errors.append(
                        f"spin ensemble {spin.label}: Gbar does not equal sqrt(N)*g"
                    )

    if device.cpb is not None:
        cpb = device.cpb
        gaps: tuple[float, float] | None = None
        try:
            gaps = cpb.levels.gaps
        except (ValueError, CPBConvergenceError) as e:
            errors.append(f"cpb: {e}")
        if gaps is not None and (gaps[0] <= 0 or gaps[1] <= 0):
            errors.append("cpb: transition gaps must be positive")
        strongest = 0.0
        for coupling in cpb.couplings:
            where = f"cpb coupling to {coupling.mode} (transition {coupling.transition})"
            if coupling.mode not in mode_labels:
                errors.append(f"{where}: unknown mode `{coupling.mode}`")
                continue
            if coupling.transition not in (0, 1):
                errors.append(f"{where}: transition must be 0 or 1")
                continue
            if coupling.strength <= 0:
                errors.append(f"{where}: coupling must be positive")
                continue
            strongest = max(strongest, coupling.strength)
            if gaps is not None:
                detuning = device.mode(coupling.mode).idle_frequency - gaps[coupling.transition]
                ratio = _ratio(detuning, coupling.strength)
                if ratio < IDLE_RATIO:
                    warnings.append(
                        f"idle resonance: mode {coupling.mode} is detuned from CPB transition "
                        f"{coupling.transition} by only {ratio:.3g} couplings"
                    )
        if gaps is not None and strongest > 0:
            if abs(gaps[0] - gaps[1]) < IDLE_RATIO * strongest:
                warnings.append(
                    "cpb anharmonicity is below ten times the strongest CPB coupling"
                )

    for hop in device.hops:
        first, second = hop.modes
        where = f"hop {first}-{second}"
        if first == second:
            errors.append(f"{where}: a mode cannot hop to itself")
        missing = [label for label in hop.modes if label not in mode_labels]
        errors.extend(f"{where}: unknown mode `{label}`" for label in missing)
        if hop.rate <= 0:
            errors.append(f"{where}: hopping rate must be positive")
        elif not missing and first != second:
            detuning = device.mode(first).idle_frequency - device.mode(second).idle_frequency
            ratio = _ratio(detuning, hop.rate)
            if ratio < IDLE_RATIO:
                warnings.append(
                    f"idle resonance: modes {first} and {second} are detuned by only "
                    f"{ratio:.3g} hopping rates"
                )

    for label, rate in device.loss.items():
        if label not in mode_labels:
            errors.append(f"loss: unknown mode `{label}`")
        if rate < 0:
            errors.append(f"loss: rate of mode {label} must be non-negative")

    for qubit in device.qubits:
        if qubit.spin not in spin_labels:
            errors.append(f"qubit {qubit.label}: unknown spin ensemble `{qubit.spin}`")
        if qubit.mode not in mode_labels:
            errors.append(f"qubit {qubit.label}: unknown mode `{qubit.mode}`")
        if qubit.spin in spin_labels and device.spin(qubit.spin).mode != qubit.mode:
            errors.append(f"qubit {qubit.label}: spin ensemble is not coupled to its mode")

    for state in device.states:
        for label, n in state.photons:
            if label not in mode_labels:
                errors.append(f"state {state.label}: unknown mode `{label}`")
            if n < 0:
                errors.append(f"state {state.label}: negative occupation of {label}")
        for label, n in state.spins:
            if label not in spin_labels:
                errors.append(f"state {state.label}: unknown spin ensemble `{label}`")
            if n < 0:
                errors.append(f"state {state.label}: negative occupation of {label}")
        if state.cpb not in range(CPB_LEVELS):
            errors.append(f"state {state.label}: CPB level must be 0, 1 or 2")
        elif state.cpb and device.cpb is None:
            errors.append(f"state {state.label}: device has no CPB")

    for message in warnings:
        log.warning("%s: %s", device.name, message)
    return report
