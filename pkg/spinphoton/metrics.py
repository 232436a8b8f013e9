from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from spinphoton.config import FORMAT_VERSION
from spinphoton.dynamics import PropagationOptions, Trajectory, evolve
from spinphoton.errors import UnknownLabelError
from spinphoton.hilbert import HybridSystem, logical_labels
from spinphoton.schedule import PulseSchedule

log = logging.getLogger(__name__)

PHASE_CONVENTION = (
    "global phase fixed so that the |00> -> |00> element is real and positive, or the "
    "overlap with the target when that element is below 0.5"
)
GATES = ("cz", "ry", "rz", "identity")


def overlaps(trajectory: Trajectory, labels: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """
    ``<label|psi(t)>`` along a trajectory, in the trajectory's picture.

    :param trajectory: The trajectory.
    :param labels: Logical or named state labels; defaults to the logical basis.
    :returns: Complex time series keyed by label.
    :raises UnknownLabelError: For labels the device does not define.
    """
    system = trajectory.system
    labels = list(labels) if labels is not None else logical_labels(system.device)
    return {label: trajectory.states[:, system.index(label)] for label in labels}


def overlap_table(trajectory: Trajectory, labels: Sequence[str] | None = None) -> pd.DataFrame:
    """
    Trajectory table with columns ``t_ns``, ``<label>_re``, ``<label>_im`` and ``norm2``.
    """
    columns: dict[str, np.ndarray] = {"t_ns": trajectory.times}
    for label, series in overlaps(trajectory, labels).items():
        columns[f"{label}_re"] = series.real
        columns[f"{label}_im"] = series.imag
    columns["norm2"] = trajectory.norms
    return pd.DataFrame(columns)


def fidelity_loss(
    final_states: np.ndarray | Sequence[np.ndarray],
    targets: np.ndarray | Sequence[np.ndarray],
) -> tuple[float, np.ndarray]:
    """
    ``lambda = max(1 - F**2)`` with ``F = |<target|psi_final>|`` per initial state.

    With the initial basis states as targets this measures population return only;
    phases are checked by :func:`gate_matrix`.

    :param final_states: One final state per initialization, as columns or a sequence.
    :param targets: The matching target states.
    :returns: ``lambda`` and the per-state fidelities ``F``.
    :raises ValueError: If the counts differ or are not a power of two (one state per
        logical basis state of one or more qubits).
    """
    finals = _as_columns(final_states)
    expected = _as_columns(targets)
    if finals.shape != expected.shape:
        msg = f"expected {expected.shape[1]} final states, got {finals.shape[1]}"
        raise ValueError(msg)
    count = expected.shape[1]
    if count < 2 or count & (count - 1):  # noqa: PLR2004
        msg = f"expected one final state per logical basis state (2, 4, ...), got {count}"
        raise ValueError(msg)
    fidelities = np.abs(np.sum(np.conj(expected) * finals, axis=0))
    return float(np.max(1.0 - fidelities**2)), fidelities


def _as_columns(states: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(states, np.ndarray) and states.ndim == 2:  # noqa: PLR2004
        return states
    return np.column_stack(list(states))


def ideal_gate(name: str, angle: float = np.pi, *, qubit: int = 0, qubits: int = 2) -> np.ndarray:
    """
    Ideal logical unitary, with the first qubit most significant.

    :param name: ``cz``, ``ry``, ``rz`` or ``identity``.
    :param angle: Rotation angle for ``ry`` and ``rz``.
    :param qubit: Target qubit of a single-qubit gate.
    :param qubits: Number of qubits of the register.
    """
    if name == "identity":
        return np.eye(2**qubits, dtype=complex)
    if name == "cz":
        if qubits != 2:  # noqa: PLR2004
            msg = "cz acts on exactly two qubits"
            raise ValueError(msg)
        return np.diag([1, 1, 1, -1]).astype(complex)
    if name == "ry":
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        single = np.array([[c, -s], [s, c]], dtype=complex)
    elif name == "rz":
        single = np.diag([1, np.exp(1j * angle)])
    else:
        msg = f"Unknown gate `{name}` (expected one of {', '.join(GATES)})"
        raise ValueError(msg)
    if not 0 <= qubit < qubits:
        msg = f"qubit index {qubit} outside a {qubits}-qubit register"
        raise ValueError(msg)
    gate = np.ones((1, 1), dtype=complex)
    for i in range(qubits):
        gate = np.kron(gate, single if i == qubit else np.eye(2))
    return gate


@dataclass(frozen=True)
class GateReport:
    """
    Logical-subspace matrix of a schedule with its figures of merit.

    ``matrix[i, j]`` is the overlap of label ``i`` with the propagated label ``j``.
    """

    labels: tuple[str, ...]
    matrix: np.ndarray
    target: np.ndarray
    duration: float
    fidelities: dict[str, float] = field(default_factory=dict)
    leakage: dict[str, float] = field(default_factory=dict)

    @property
    def fidelity_loss(self) -> float:
        return max(1.0 - f**2 for f in self.fidelities.values())

    @property
    def distance(self) -> float:
        return float(np.max(np.abs(self.matrix - self.target)))

    @property
    def phases(self) -> dict[str, float]:
        return {label: float(np.angle(self.matrix[i, i])) for i, label in enumerate(self.labels)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "labels": list(self.labels),
            "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix.tolist()],
            "fidelity_loss": self.fidelity_loss,
            "fidelities": dict(self.fidelities),
            "leakage": dict(self.leakage),
            "duration_ns": self.duration,
            "distance": self.distance,
            "phases": self.phases,
            "phase_convention": PHASE_CONVENTION,
        }


def gate_matrix(
    system: HybridSystem,
    schedule: PulseSchedule,
    target: np.ndarray | None = None,
    options: PropagationOptions | None = None,
) -> GateReport:
    """
    Propagate every logical basis state and project onto the logical subspace.

    :param system: Hybrid system of a device with qubits.
    :param schedule: The gate schedule.
    :param target: Ideal logical matrix; defaults to CZ for two qubits, otherwise identity.
    :param options: Propagation options; the picture should be ``interaction``.
    :returns: The report, with the global phase fixed by the ``|00>`` element.
    :raises UnknownLabelError: If the device defines no qubits.
    """
    labels = logical_labels(system.device)
    if not labels:
        msg = f"device {system.device.name} defines no qubits"
        raise UnknownLabelError(msg)
    basis = system.states(labels)
    finals = evolve(system, basis, schedule, (0.0, schedule.duration), options)
    if target is None:
        target = ideal_gate("cz") if len(labels) == 4 else np.eye(len(labels))  # noqa: PLR2004
    target = np.asarray(target, dtype=complex)
    matrix = np.conj(basis.T) @ finals
    # gates that empty |00> fall back to the phase of their overlap with the target
    reference = matrix[0, 0]
    if abs(reference) < 0.5:  # noqa: PLR2004
        reference = np.trace(np.conj(target.T) @ matrix)
    if abs(reference) > 0:
        matrix = matrix * np.exp(-1j * np.angle(reference))
    _, fidelities = fidelity_loss(finals, basis @ target)
    leakage = np.clip(1.0 - np.sum(np.abs(matrix) ** 2, axis=0), 0.0, None)
    report = GateReport(
        labels=tuple(labels),
        matrix=matrix,
        target=target,
        duration=schedule.duration,
        fidelities=dict(zip(labels, map(float, fidelities))),
        leakage=dict(zip(labels, map(float, leakage))),
    )
    log.info(
        "Gate %s: lambda %.3e, distance %.3e", schedule.name, report.fidelity_loss, report.distance
    )
    return report


def superposition_fidelity(
    system: HybridSystem,
    schedule: PulseSchedule,
    coefficients: Mapping[str, complex],
    target: np.ndarray | None = None,
    options: PropagationOptions | None = None,
) -> float:
    """
    ``|<U_target psi0|psi_final>|`` for a logical superposition ``psi0``.

    :param coefficients: Amplitudes keyed by logical label; normalized here.
    :param target: Ideal logical matrix; defaults to CZ for two qubits.
    """
    labels = logical_labels(system.device)
    unknown = sorted(set(coefficients) - set(labels))
    if unknown:
        msg = f"Unknown logical label(s) {', '.join(unknown)}"
        raise UnknownLabelError(msg)
    amplitudes = np.array([coefficients.get(label, 0.0) for label in labels], dtype=complex)
    norm = np.linalg.norm(amplitudes)
    if norm == 0:
        msg = "superposition has zero norm"
        raise ValueError(msg)
    amplitudes /= norm
    if target is None:
        target = ideal_gate("cz") if len(labels) == 4 else np.eye(len(labels))  # noqa: PLR2004
    basis = system.states(labels)
    final = evolve(system, basis @ amplitudes, schedule, (0.0, schedule.duration), options)
    ideal = basis @ (np.asarray(target) @ amplitudes)
    return float(abs(np.vdot(ideal, final)))


@dataclass(frozen=True)
class LossReport:
    """
    Norm lost to cavity leakage: in total, per output interval and per gate stage.
    """

    deficit: float
    times: np.ndarray
    profile: np.ndarray
    by_stage: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"deficit": self.deficit, "by_stage": dict(self.by_stage)}


def norm_deficit(trajectory: Trajectory) -> LossReport:
    """
    ``1 - norm**2`` at the end of a lossy trajectory, with the decay profile.
    """
    norms = trajectory.norms
    times = trajectory.times
    by_stage = {}
    for stage, (start, end) in trajectory.stages.items():
        inside = np.flatnonzero((times >= start - 1e-9) & (times <= end + 1e-9))
        if len(inside):
            by_stage[stage] = float(norms[inside[0]] - norms[inside[-1]])
    return LossReport(
        deficit=float(1.0 - norms[-1]),
        times=times[1:],
        profile=norms[:-1] - norms[1:],
        by_stage=by_stage,
    )


def excitation_number(state: np.ndarray, system: HybridSystem) -> float:
    """``<K>`` normalized by the state's squared norm."""
    populations = np.abs(np.asarray(state)) ** 2
    return float(populations @ system.basis.excitations / np.sum(populations))


def photon_number(states: np.ndarray, system: HybridSystem) -> np.ndarray:
    """Total photon number ``sum <a^dag a>`` of a state or of every row of a state array."""
    populations = np.abs(np.asarray(states)) ** 2
    total = sum(system.terms.photon_numbers.values())
    return populations @ total
