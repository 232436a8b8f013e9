"""
Gate compiler: R_z, R_y and CZ pulse schedules and the phase ledger used to zero their
net phases.

Conventions
-----------
- ``R_z(phi) = diag(1, e^{i phi})`` on ``(|0>, |1>)`` of a hybrid qubit, where ``|0>`` is a
  spin excitation and ``|1>`` a photon.
- Ledger phases are dynamical phases: an interaction-picture amplitude ``e^{-i theta}``
  has phase ``theta``, reported in ``[0, 2*pi)``.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from spinphoton.device import IDLE_RATIO, DeviceSpec, QubitSpec
from spinphoton.dynamics import Integrator, PropagationOptions, evolve
from spinphoton.errors import CompilationError, LedgerError, UnknownLabelError
from spinphoton.hilbert import HybridSystem, Picture, logical_labels
from spinphoton.schedule import Pulse, PulseSchedule, PulseShape, schedule_warnings

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
ANGLE_EPS = 1e-9
# states whose shifted energies differ by at most this fraction of their coupling are
# treated as one resonant block
RESONANCE_WIDTH = 0.5
MIN_POPULATION = 0.9
DELAY_STEP = 1e-3
LATTICE_RANGE = 12
MAX_OFFSET_RATIO = 0.25
RAMP_SCAN_POINTS = 2001
EDGE_TOLERANCE = 1e-12
# largest accepted error in |<0|U|0>| after re-solving a ramped resonant pulse
RAMP_MISS = 1e-4
_NEGLIGIBLE = 1e-14

LedgerMethod = Literal["analytic", "numeric"]
Variant = Literal["scalable", "single-cavity"]
VARIANTS = ("scalable", "single-cavity")


def wrap_phase(theta: float | np.ndarray) -> Any:
    """Map to ``[-pi, pi)``."""
    return (np.asarray(theta) + np.pi) % TWO_PI - np.pi


def _qubit(device: DeviceSpec, label: str) -> QubitSpec:
    try:
        return device.qubit(label)
    except KeyError as e:
        raise UnknownLabelError(e.args[0]) from None


def _empty(name: str, start: float) -> PulseSchedule:
    return PulseSchedule.of((), name=name, duration=start)


def _resonance_warnings(device: DeviceSpec, mode: str, detuning: float) -> list[str]:
    frequency = device.mode(mode).idle_frequency + detuning
    warnings = []
    for spin in device.spins_on(mode):
        if abs(frequency - spin.gap) < IDLE_RATIO * spin.coupling:
            warnings.append(
                f"rz on {mode}: shifted mode within {IDLE_RATIO:g} couplings of spin {spin.label}"
            )
    if device.cpb is not None:
        gaps = device.cpb.levels.gaps
        for coupling in device.cpb_couplings(mode):
            if abs(frequency - gaps[coupling.transition]) < IDLE_RATIO * coupling.strength:
                warnings.append(
                    f"rz on {mode}: shifted mode within {IDLE_RATIO:g} couplings of the CPB "
                    f"{coupling.transition}-{coupling.transition + 1} transition"
                )
    for message in warnings:
        log.warning(message)
    return warnings


def compile_rz(
    device: DeviceSpec,
    qubit: str,
    angle: float,
    detuning: float | None = None,
    *,
    start: float = 0.0,
    ramp_time: float = 0.0,
) -> PulseSchedule:
    """
    Off-resonant pulse on the qubit's mode whose detuning area is ``-angle`` (mod 2*pi).

    :param device: The device.
    :param qubit: Qubit label.
    :param angle: Rotation angle in rad, reduced mod 2*pi.
    :param detuning: Pulse detuning in rad/ns; defaults to half the mode's tuning bound,
        lowering the mode for angles below pi and raising it otherwise, so the pulse lasts
        at most ``pi / |detuning|``.
    :param start: Start time of the pulse in ns.
    :param ramp_time: Use a linear-ramp pulse with this edge time instead of a step.
    :returns: A schedule with at most one pulse.
    :raises CompilationError: If ``detuning`` is zero or beyond the tuning bound.
    """
    spec = _qubit(device, qubit)
    mode = device.mode(spec.mode)
    name = f"rz({qubit}, {angle:.6g})"
    area = -angle % TWO_PI
    if min(area, TWO_PI - area) < ANGLE_EPS:
        return _empty(name, start)

    if detuning is None:
        detuning = mode.max_detuning / 2 if area <= np.pi else -mode.max_detuning / 2
    if detuning == 0 or not mode.within_bounds(detuning):
        bound = mode.max_detuning / TWO_PI
        msg = (
            f"rz on {spec.mode}: detuning {detuning / TWO_PI:.6g} GHz is not feasible; "
            f"choose a non-zero value in [{-bound:.6g}, {bound:.6g}] GHz"
        )
        raise CompilationError(msg)

    period = TWO_PI / abs(detuning)
    duration = (-angle / detuning) % period
    shape = PulseShape.STEP
    if ramp_time > 0:
        shape = PulseShape.RAMP
        duration += ramp_time
        while duration < 2 * ramp_time:
            duration += period
    pulse = Pulse.starting_at(
        spec.mode, detuning, start, duration, shape=shape, ramp_time=ramp_time, stage="rz"
    )
    schedule = PulseSchedule.of([pulse], name=name)
    warnings = schedule_warnings(device, schedule)
    warnings += _resonance_warnings(device, spec.mode, detuning)
    return schedule.with_warnings(warnings)


def _edge_propagator(
    coupling: float, mismatch: float, depth: float, ramp_time: float, *, rising: bool
) -> np.ndarray:
    """
    Interaction-picture propagator of one spin-photon pair, basis ``(spin, photon)``, over a
    linear detuning edge between 0 and ``depth`` that starts at t = 0.

    ``mismatch`` is the spin gap minus the idle mode frequency.
    """

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        fraction = t / ramp_time if rising else 1.0 - t / ramp_time
        phase = np.exp(1j * mismatch * t)
        hamiltonian = np.array(
            [[0.0, coupling / 2 * phase], [coupling / 2 * np.conj(phase), depth * fraction]]
        )
        return (-1j * hamiltonian @ y.reshape(2, 2)).ravel()

    solution = solve_ivp(
        rhs,
        (0.0, ramp_time),
        np.eye(2, dtype=complex).ravel(),
        method="DOP853",
        rtol=EDGE_TOLERANCE,
        atol=EDGE_TOLERANCE,
    )
    if not solution.success:
        msg = f"ramp edge integration failed: {solution.message}"
        raise CompilationError(msg)
    return solution.y[:, -1].reshape(2, 2)


def _shifted(propagator: np.ndarray, mismatch: float, times: np.ndarray) -> np.ndarray:
    # a pulse delayed by T conjugates the pair propagator with diag(1, e^{-i mismatch T})
    out = np.broadcast_to(propagator, (len(times), 2, 2)).copy()
    phase = np.exp(1j * mismatch * times)
    out[:, 0, 1] *= phase
    out[:, 1, 0] *= np.conj(phase)
    return out


def _ramped_resonance(
    coupling: float, mismatch: float, offset: float, ramp_time: float
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Pair propagators of a trapezoid pulse of depth ``mismatch + offset``, as a function
    of the plateau length.
    """
    depth = mismatch + offset
    up = _edge_propagator(coupling, mismatch, depth, ramp_time, rising=True)
    down = _edge_propagator(coupling, mismatch, depth, ramp_time, rising=False)
    # on the plateau, (spin, e^{i mismatch t} photon) evolves under a constant Hamiltonian
    energies, vectors = np.linalg.eigh(np.array([[0.0, coupling / 2], [coupling / 2, offset]]))

    def propagators(lengths: np.ndarray) -> np.ndarray:
        lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
        plateau = np.einsum(
            "ij,nj,kj->nik", vectors, np.exp(-1j * np.outer(lengths, energies)), vectors.conj()
        )
        end = ramp_time + lengths
        plateau[:, :, 1] *= np.exp(1j * mismatch * ramp_time)
        plateau[:, 1, :] *= np.exp(-1j * mismatch * end)[:, None]
        return _shifted(down, mismatch, end) @ plateau @ up

    return propagators


def _solve_plateau(
    propagators: Callable[[np.ndarray], np.ndarray], target: float, guess: float, span: float
) -> tuple[float, float]:
    """Plateau length nearest ``guess`` with ``|<0|U|0>| = target``, and the miss left over."""
    lengths = np.linspace(0.0, guess + span, RAMP_SCAN_POINTS)
    miss = np.abs(np.abs(propagators(lengths)[:, 0, 0]) - target)
    padded = np.concatenate([[np.inf], miss, [np.inf]])
    minima = np.flatnonzero((miss <= padded[:-2]) & (miss <= padded[2:]))
    k = int(minima[np.argmin(np.abs(lengths[minima] - guess))])
    lo, hi = lengths[max(k - 1, 0)], lengths[min(k + 1, len(lengths) - 1)]

    def objective(length: float) -> float:
        return float((abs(propagators(np.array([length]))[0, 0, 0]) ** 2 - target**2) ** 2)

    result = minimize_scalar(
        objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12}
    )
    length = float(result.x)
    return length, float(abs(abs(propagators(np.array([length]))[0, 0, 0]) - target))


def _ramped_rotation(
    coupling: float, mismatch: float, angle: float, ramp_time: float
) -> tuple[float, float, np.ndarray]:
    """
    Re-solve a ramped resonant pulse so it rotates by ``angle``.

    The edges rotate the pair about axes tilted to either side of the plateau axis, so the
    plateau length alone cannot reach every angle; a small detuning offset tilts the
    plateau axis to compensate.

    :returns: Detuning offset, plateau length and the pair propagator of the pulse.
    """
    target = np.cos(angle / 2)
    guess, span = angle / coupling, TWO_PI / coupling

    def solve(offset: float) -> tuple[float, float]:
        return _solve_plateau(
            _ramped_resonance(coupling, mismatch, offset, ramp_time), target, guess, span
        )

    offset = 0.0
    plateau, miss = solve(offset)
    if miss > RAMP_MISS / 100:
        result = minimize_scalar(
            lambda x: solve(x)[1] ** 2,
            bounds=(-coupling / 2, coupling / 2),
            method="bounded",
            options={"xatol": 1e-10},
        )
        offset = float(result.x)
        plateau, miss = solve(offset)
    if miss > RAMP_MISS:
        msg = (
            f"ry: ramps of {ramp_time:.6g} ns leave a rotation error of {miss:.3g}; "
            "shorten the ramp"
        )
        raise CompilationError(msg)
    propagator = _ramped_resonance(coupling, mismatch, offset, ramp_time)(np.array([plateau]))[0]
    return offset, plateau, propagator


def compile_ry(
    device: DeviceSpec,
    qubit: str,
    angle: float,
    *,
    start: float = 0.0,
    ramp_time: float = 0.0,
) -> PulseSchedule:
    """
    Resonant spin-photon pulse of duration ``angle / Gbar`` followed by the R_z that
    removes the detuning phase picked up by the photon.

    A free delay precedes the resonant pulse so it starts when the idle spin-photon
    mismatch has advanced by pi/2 (mod 2*pi); the rotation is then about the y axis.

    With ``ramp_time`` the edges rotate the pair too, so the whole pulse is solved on the
    spin-photon pair propagator instead.

    :raises CompilationError: If the angle is outside ``[0, 2*pi]``, the resonance is
        beyond the tuning bound, or the ramps leave a rotation error above ``RAMP_MISS``.
    """
    spec = _qubit(device, qubit)
    mode = device.mode(spec.mode)
    spin = device.spin(spec.spin)
    name = f"ry({qubit}, {angle:.6g})"
    if not -ANGLE_EPS <= angle <= TWO_PI + ANGLE_EPS:
        msg = f"ry on {qubit}: angle {angle:.6g} rad outside [0, 2pi]"
        raise CompilationError(msg)
    if angle < ANGLE_EPS:
        return _empty(name, start)

    detuning = spin.gap - mode.idle_frequency
    if not mode.within_bounds(detuning):
        msg = (
            f"ry on {spec.mode}: resonance with spin {spin.label} needs "
            f"{detuning / TWO_PI:.6g} GHz, beyond the tuning bound "
            f"{mode.max_detuning / TWO_PI:.6g} GHz"
        )
        raise CompilationError(msg)

    delay = 0.0
    offset = 0.0
    duration = angle / spin.coupling
    correction: float | None = None
    if not detuning:
        log.warning("ry on %s: mode idles on resonance, rotation axis is not aligned", qubit)
        duration += 2 * ramp_time
    elif ramp_time > 0:
        offset, plateau, u = _ramped_rotation(spin.coupling, detuning, angle, ramp_time)
        duration = plateau + 2 * ramp_time
        # unitarity: arg u11 = arg det U - arg u00, which stays defined when |u00| -> 0
        determinant = float(np.angle(np.linalg.det(u)))
        aligned = (np.angle(u[1, 0]) + np.angle(u[0, 0]) - determinant) / detuning
        delay = (aligned - start) % (TWO_PI / abs(detuning))
        correction = 2 * float(np.angle(u[0, 0])) - determinant
        log.debug(
            "ry(%s): ramped plateau %.4f ns, detuning offset %.4g rad/ns", qubit, plateau, offset
        )
    else:
        delay = (-(np.pi / 2) / detuning - start) % (TWO_PI / abs(detuning))

    shape = PulseShape.RAMP if ramp_time > 0 else PulseShape.STEP
    resonant = Pulse.starting_at(
        spec.mode,
        detuning + offset,
        start + delay,
        duration,
        shape=shape,
        ramp_time=ramp_time,
        stage="ry:resonant",
        resonant=True,
    )
    if correction is None:
        correction = resonant.area
    compensation = compile_rz(device, qubit, correction, start=resonant.end, ramp_time=ramp_time)
    pulses = [resonant] + [replace(p, stage="ry:compensation") for p in compensation.pulses]
    log.debug(
        "ry(%s): axis delay %.4f ns, resonant %.4f ns, compensation %d pulse(s)",
        qubit,
        delay,
        resonant.duration,
        len(compensation.pulses),
    )
    warnings = schedule_warnings(device, PulseSchedule.of([resonant]))
    warnings += list(compensation.warnings)
    return PulseSchedule.of(pulses, name=name).with_warnings(warnings)


@dataclass(frozen=True)
class PhaseLedger:
    """
    Net phase of every tracked state under a schedule, with the basis state it ends in.
    """

    phases: dict[str, float]
    finals: dict[str, str] = field(default_factory=dict)
    populations: dict[str, float] = field(default_factory=dict)
    method: str = "analytic"

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.phases)

    def relative(self, label: str, reference: str) -> float:
        return float(wrap_phase(self.phases[label] - self.phases[reference]))

    def conditional_phase(self) -> float:
        """``theta_11 - theta_10 - theta_01 + theta_00`` in ``[0, 2*pi)``."""
        p = self.phases
        return float((p["11"] - p["10"] - p["01"] + p["00"]) % TWO_PI)

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "phases": dict(self.phases),
            "finals": dict(self.finals),
            "populations": dict(self.populations),
        }


def _resonant_blocks(
    coupling: sparse.csr_matrix, energies: np.ndarray, support: Iterable[int]
) -> list[np.ndarray]:
    seen: set[int] = set()
    blocks = []
    for seed in support:
        if seed in seen:
            continue
        seen.add(seed)
        block, queue = [seed], [seed]
        while queue:
            p = queue.pop()
            start, stop = coupling.indptr[p], coupling.indptr[p + 1]
            for q, value in zip(coupling.indices[start:stop], coupling.data[start:stop]):
                if q in seen:
                    continue
                if abs(energies[p] - energies[q]) <= RESONANCE_WIDTH * abs(value):
                    seen.add(q)
                    block.append(q)
                    queue.append(q)
        blocks.append(np.array(sorted(block)))
    return blocks


def _dispersive_shifts(
    coupling: sparse.csr_matrix, energies: np.ndarray, block: np.ndarray
) -> np.ndarray:
    members = set(block.tolist())
    shifts = np.zeros(len(block))
    for i, k in enumerate(block):
        start, stop = coupling.indptr[k], coupling.indptr[k + 1]
        for q, value in zip(coupling.indices[start:stop], coupling.data[start:stop]):
            if q not in members:
                shifts[i] += abs(value) ** 2 / (energies[k] - energies[q])
    return shifts


def _analytic_amplitudes(
    system: HybridSystem, schedule: PulseSchedule, initial: int, *, dispersive: bool
) -> np.ndarray:
    """
    Interaction-picture amplitudes at the end of ``schedule`` starting from basis state
    ``initial``, evolving each resonant block exactly on every constant-detuning window.
    """
    terms = system.terms
    coupling = terms.coupling
    idle = terms.idle_energies
    amplitudes = np.zeros(system.dimension, dtype=complex)
    amplitudes[initial] = 1.0
    for a, b in schedule.windows():
        tau = b - a
        shifted = idle + terms.detuning_diagonal(schedule.detunings_at(0.5 * (a + b)))
        support = np.flatnonzero(np.abs(amplitudes) > _NEGLIGIBLE)
        evolved = np.zeros_like(amplitudes)
        for block in _resonant_blocks(coupling, shifted, support):
            reference = float(np.mean(shifted[block]))
            diagonal = shifted[block] - reference
            if dispersive:
                diagonal = diagonal + _dispersive_shifts(coupling, shifted, block)
            hamiltonian = np.diag(diagonal).astype(complex)
            hamiltonian += coupling[block][:, block].toarray()
            propagator = linalg.expm(-1j * hamiltonian * tau)
            bare = idle[block]
            frame = np.exp(
                1j * ((bare - reference)[:, None] * tau + (bare[:, None] - bare[None, :]) * a)
            )
            evolved[block] = (frame * propagator) @ amplitudes[block]
        amplitudes = evolved
    return amplitudes


def _numeric_amplitudes(
    system: HybridSystem, schedule: PulseSchedule, initial: np.ndarray
) -> np.ndarray:
    integrator = Integrator.PIECEWISE_EXACT if schedule.is_step_only else Integrator.ADAPTIVE_RK
    options = PropagationOptions(picture=Picture.INTERACTION, integrator=integrator, grid=None)
    return evolve(system, initial, schedule, (0.0, schedule.duration), options)


def phase_ledger(
    system: HybridSystem,
    schedule: PulseSchedule,
    labels: Sequence[str] | None = None,
    *,
    method: LedgerMethod = "analytic",
    dispersive: bool = True,
) -> PhaseLedger:
    """
    Net phase of each labelled state over ``schedule``.

    The analytic method handles step pulses only; schedules with ramps are evaluated
    numerically whatever ``method`` says.

    :param system: The hybrid system.
    :param schedule: Detuning schedule, evaluated over ``[0, duration]``.
    :param labels: Logical or named state labels; defaults to the logical basis.
    :param method: ``analytic`` or ``numeric``.
    :param dispersive: Include second-order shifts from off-resonant couplings
        (analytic method only).
    :returns: The ledger.
    :raises LedgerError: If a state does not end in a single basis state.
    """
    labels = list(labels) if labels is not None else logical_labels(system.device)
    if method not in ("analytic", "numeric"):
        msg = f"Unknown ledger method `{method}`"
        raise ValueError(msg)
    if method == "analytic" and not schedule.is_step_only:
        log.info("Schedule %s has ramps; computing the ledger numerically", schedule.name)
        method = "numeric"

    indices = [system.index(label) for label in labels]
    if method == "numeric":
        columns = _numeric_amplitudes(system, schedule, system.states(labels))
        finals = [columns[:, i] for i in range(len(labels))]
    else:
        finals = [
            _analytic_amplitudes(system, schedule, index, dispersive=dispersive) for index in indices
        ]

    phases, states, populations = {}, {}, {}
    for label, amplitudes in zip(labels, finals):
        weights = np.abs(amplitudes) ** 2
        dominant = int(np.argmax(weights))
        population = float(weights[dominant] / np.sum(weights))
        if population < MIN_POPULATION:
            msg = (
                f"state {label} is not expressible as a single BasisState after "
                f"{schedule.name or 'the schedule'} (largest population {population:.3f})"
            )
            raise LedgerError(msg)
        phases[label] = float(-np.angle(amplitudes[dominant]) % TWO_PI)
        states[label] = system.basis.describe(system.basis[dominant])
        populations[label] = population
    return PhaseLedger(phases, states, populations, method)


@dataclass(frozen=True)
class _Stage:
    """
    One CZ stage: simultaneous pulses sharing a start time.

    The 2*pi stage carries ``rabi_coupling``; its duration and detunings then depend on
    the Rabi offset. A ``free`` stage takes its length from the delay solve.
    """

    name: str
    pulses: tuple[tuple[str, float, float], ...]
    rabi_coupling: float | None = None
    free: bool = False

    def duration(self, offset: float = 0.0, length: float = 0.0) -> float:
        if self.free:
            return length
        if self.rabi_coupling is not None:
            return TWO_PI / np.hypot(self.rabi_coupling, offset)
        return max(duration for _, _, duration in self.pulses)

    def build(self, start: float, offset: float = 0.0, length: float = 0.0) -> list[Pulse]:
        if self.free:
            if length <= 0:
                return []
            return [
                Pulse.starting_at(mode, detuning, start, length, stage=self.name)
                for mode, detuning, _ in self.pulses
            ]
        if self.rabi_coupling is None:
            return [
                Pulse.starting_at(mode, detuning, start, duration, stage=self.name, resonant=True)
                for mode, detuning, duration in self.pulses
            ]
        return [
            Pulse.starting_at(
                mode, detuning - offset, start, self.duration(offset), stage=self.name, resonant=True
            )
            for mode, detuning, _ in self.pulses
        ]


def _bridge(device: DeviceSpec, mode: str, partner: str, stage: str) -> list[tuple[str, float]]:
    """
    Detunings bringing ``mode`` into resonance with ``partner``.

    The single-mode shift is used when it fits the tuning bound, otherwise both modes
    meet half-way.
    """
    first, second = device.mode(mode), device.mode(partner)
    gap = second.idle_frequency - first.idle_frequency
    if first.within_bounds(gap):
        return [(mode, gap)]
    if first.within_bounds(gap / 2) and second.within_bounds(-gap / 2):
        log.info("%s: splitting the %s-%s shift symmetrically", stage, mode, partner)
        return [(mode, gap / 2), (partner, -gap / 2)]
    msg = (
        f"{stage}: bringing {mode} into resonance with {partner} needs "
        f"{gap / TWO_PI:.6g} GHz and no symmetric split fits the tuning bounds"
    )
    raise CompilationError(msg)


def _bus(device: DeviceSpec, qubit: QubitSpec) -> tuple[str, float]:
    partners = device.hop_partners(qubit.mode)
    if len(partners) != 1:
        msg = f"cz: qubit {qubit.label} needs exactly one hopping link from {qubit.mode}"
        raise CompilationError(msg)
    return partners[0]


def _cpb_drive(device: DeviceSpec, mode: str, transition: int, stage: str) -> tuple[float, float]:
    """Detuning of ``mode`` onto CPB ``transition`` and the coupling strength."""
    couplings = [c for c in device.cpb_couplings(mode) if c.transition == transition]
    if not couplings:
        msg = f"{stage}: the CPB has no {transition}-{transition + 1} coupling to {mode}"
        raise CompilationError(msg)
    target = device.cpb.levels.gaps[transition]  # type: ignore[union-attr]
    spec = device.mode(mode)
    detuning = target - spec.idle_frequency
    if not spec.within_bounds(detuning):
        msg = (
            f"{stage}: {mode} must move {detuning / TWO_PI:.6g} GHz to reach the CPB "
            f"{transition}-{transition + 1} transition, beyond its tuning bound "
            f"{spec.max_detuning / TWO_PI:.6g} GHz"
        )
        raise CompilationError(msg)
    return detuning, couplings[0].strength


def _phase_stage(device: DeviceSpec, qubit: QubitSpec, name: str) -> _Stage:
    """
    Free-length off-resonant pulse on the qubit's mode, detuned away from its spin
    ensemble, that zeroes the qubit's single-photon phase.
    """
    mode = device.mode(qubit.mode)
    spin = device.spin(qubit.spin)
    sign = 1.0 if spin.gap <= mode.idle_frequency else -1.0
    return _Stage(name, ((qubit.mode, sign * mode.max_detuning / 2, 0.0),), free=True)


def _cz_stages(device: DeviceSpec, variant: Variant) -> tuple[list[_Stage], tuple[int, ...]]:
    """Stages in order and the indices of the stages followed by a free delay."""
    if device.cpb is None:
        msg = f"cz: device {device.name} has no CPB"
        raise CompilationError(msg)
    if len(device.qubits) != 2:  # noqa: PLR2004
        msg = f"cz: device {device.name} must define exactly two qubits"
        raise CompilationError(msg)
    first, second = device.qubits

    if variant == "single-cavity":
        absorb_detuning, absorb_coupling = _cpb_drive(device, first.mode, 0, "cz:2-absorb")
        rabi_detuning, rabi_coupling = _cpb_drive(device, second.mode, 1, "cz:3-rabi")
        absorb = ((first.mode, absorb_detuning, np.pi / absorb_coupling),)
        stages = [
            _Stage("cz:2-absorb", absorb),
            _Stage("cz:3-rabi", ((second.mode, rabi_detuning, 0.0),), rabi_coupling),
            _Stage("cz:4-emit", absorb),
            _phase_stage(device, second, "cz:5-phase"),
        ]
        return stages, (1,)

    hop_pulses = []
    buses = []
    for qubit in (first, second):
        bus, rate = _bus(device, qubit)
        buses.append(bus)
        hop_pulses += [
            (mode, detuning, np.pi / (2 * rate))
            for mode, detuning in _bridge(device, qubit.mode, bus, "cz:1-hop")
        ]
    absorb_detuning, absorb_coupling = _cpb_drive(device, buses[0], 0, "cz:2-absorb")
    rabi_detuning, rabi_coupling = _cpb_drive(device, buses[1], 1, "cz:3-rabi")
    absorb = ((buses[0], absorb_detuning, np.pi / absorb_coupling),)
    stages = [
        _Stage("cz:1-hop", tuple(hop_pulses)),
        _Stage("cz:2-absorb", absorb),
        _Stage("cz:3-rabi", ((buses[1], rabi_detuning, 0.0),), rabi_coupling),
        _Stage("cz:4-emit", absorb),
        _Stage("cz:5-hop", tuple(hop_pulses)),
    ]
    return stages, (2, 3)


def _layout(
    stages: list[_Stage],
    slots: tuple[int, ...],
    times: Sequence[float],
    offset: float,
    name: str,
) -> PulseSchedule:
    """
    Lay the stages end to end; ``times`` holds, in stage order, the length of each free
    stage and the delay after each slot.
    """
    t = 0.0
    pulses: list[Pulse] = []
    remaining = iter(times)
    for i, stage in enumerate(stages):
        length = next(remaining) if stage.free else 0.0
        pulses += stage.build(t, offset, length)
        t += stage.duration(offset, length)
        if i in slots:
            t += next(remaining)
    return PulseSchedule.of(pulses, name=name, duration=t)


def _solve_delays(
    residuals: Callable[[tuple[float, ...]], np.ndarray],
    delays: tuple[float, ...],
    *,
    smallest_total: bool,
) -> tuple[float, ...]:
    """
    Delays zeroing ``residuals`` (mod 2*pi), from the residual slopes at ``delays``.

    Candidate solutions form a lattice; the non-negative point with the smallest total
    delay (or the smallest change, when refining) is returned.
    """
    base = wrap_phase(residuals(delays))
    n = len(delays)
    slopes = np.empty((n, n))
    for i in range(n):
        bumped = list(delays)
        bumped[i] += DELAY_STEP
        slopes[:, i] = wrap_phase(residuals(tuple(bumped)) - base) / DELAY_STEP
    try:
        inverse = np.linalg.inv(slopes)
    except np.linalg.LinAlgError:
        msg = "cz: the delay slots do not control the residual phases"
        raise CompilationError(msg) from None

    current = np.asarray(delays)
    best: np.ndarray | None = None
    best_cost = np.inf
    for k in itertools.product(range(-LATTICE_RANGE, LATTICE_RANGE + 1), repeat=n):
        step = inverse @ (-base + TWO_PI * np.asarray(k))
        candidate = current + step
        if np.any(candidate < -1e-12):
            continue
        cost = candidate.sum() if smallest_total else np.abs(step).sum()
        if cost < best_cost:
            best, best_cost = candidate, cost
    if best is None:
        msg = "cz: no non-negative delays zero the residual phases"
        raise CompilationError(msg)
    return tuple(float(d) for d in np.maximum(best, 0.0))


def compile_cz(
    device: DeviceSpec,
    variant: Variant = "scalable",
    *,
    system: HybridSystem | None = None,
    ledger: LedgerMethod = "analytic",
) -> PulseSchedule:
    """
    Controlled-Z through a two-step Rabi oscillation of the CPB.

    ``scalable``: hop both photons onto their bus modes, absorb the first into the CPB,
    cycle the second through the CPB's second level, then undo the first two stages.
    ``single-cavity``: both qubit modes couple to the CPB directly, so the hop stages
    are dropped, and a closing off-resonant pulse on the second qubit's mode stands in
    for the second delay.

    Free delays after the 2*pi stage zero the single-photon phases; a small detuning
    offset on the 2*pi stage sets the conditional phase to pi. Both come from two
    alternating closed-form solves against the phase ledger.

    :param device: Device with two qubits and a CPB (and hopping links for ``scalable``).
    :param variant: ``scalable`` or ``single-cavity``.
    :param system: Hybrid system used for the ledger; built from ``device`` if omitted.
    :param ledger: Ledger method used to solve delays and offset.
    :returns: The schedule, annotated with stage names and bound warnings.
    :raises CompilationError: If a stage cannot be realised within the tuning bounds, or
        the offset needed for the conditional phase is too large.
    """
    if variant not in VARIANTS:
        msg = f"cz: unknown variant `{variant}` (expected {' or '.join(VARIANTS)})"
        raise CompilationError(msg)
    stages, slots = _cz_stages(device, variant)
    system = system or HybridSystem.build(device)
    rabi = next(stage for stage in stages if stage.rabi_coupling is not None)
    rabi_coupling = float(rabi.rabi_coupling or 0.0)
    name = f"cz({variant})"
    labels = logical_labels(device)

    def ledger_of(delays: Sequence[float], offset: float) -> PhaseLedger:
        return phase_ledger(system, _layout(stages, slots, delays, offset, name), labels, method=ledger)

    def residuals_at(offset: float) -> Callable[[tuple[float, ...]], np.ndarray]:
        def residuals(delays: tuple[float, ...]) -> np.ndarray:
            phases = ledger_of(delays, offset).phases
            targets = [phases["10"] - phases["00"]]
            if len(delays) > 1:
                targets.append(phases["01"] - phases["00"])
            return np.asarray(targets)

        return residuals

    delays: tuple[float, ...] = (0.0,) * (len(slots) + sum(stage.free for stage in stages))
    offset = 0.0
    delays = _solve_delays(residuals_at(offset), delays, smallest_total=True)
    for _ in range(2):
        error = float(wrap_phase(ledger_of(delays, offset).conditional_phase() - np.pi))
        offset += -2 * error / rabi.duration(offset)
        if abs(offset) > MAX_OFFSET_RATIO * abs(rabi_coupling):
            msg = (
                f"cz:3-rabi: conditional phase needs a {offset / TWO_PI * 1e3:.4g} MHz offset, "
                f"beyond {MAX_OFFSET_RATIO:g} of the coupling"
            )
            raise CompilationError(msg)
        delays = _solve_delays(residuals_at(offset), delays, smallest_total=False)

    schedule = _layout(stages, slots, delays, offset, name)
    log.info(
        "Compiled %s: delays %s ns, Rabi offset %.4g MHz, duration %.4f ns",
        name,
        ", ".join(f"{d:.4f}" for d in delays),
        offset / TWO_PI * 1e3,
        schedule.duration,
    )
    return schedule.with_warnings(schedule_warnings(device, schedule))

