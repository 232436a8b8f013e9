"""
Time evolution of hybrid-system states under a pulse schedule.

Two production integrators share one interface:

- ``piecewise-exact`` applies ``expm_multiply`` over every interval on which the
  Schrodinger-picture Hamiltonian is constant, so it only accepts step-shaped pulses;
- ``adaptive-rk`` integrates the interaction-picture equation with DOP853 and checks
  itself against a second pass with half the largest accepted step.

:func:`oracle_propagate` is an independent dense reference used by the test-suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from spinphoton.errors import BasisTooLargeError, IntegratorError, OracleError, ToleranceError
from spinphoton.hilbert import HybridSystem, Picture
from spinphoton.schedule import PulseSchedule

log = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DEFAULT_GRID = 0.05
MAX_TOLERANCE = 1e-4
ORACLE_MAX_DIMENSION = 200
# accepted difference between the two step-halving passes, in units of the tolerance
HALVING_FACTOR = 100.0
_SAME_TIME = 1e-9
NORM_DRIFT_WARNING = 1e-6


class Integrator(str, Enum):
    PIECEWISE_EXACT = "piecewise-exact"
    ADAPTIVE_RK = "adaptive-rk"


@dataclass(frozen=True)
class PropagationOptions:
    picture: Picture = Picture.INTERACTION
    integrator: Integrator = Integrator.PIECEWISE_EXACT
    tolerance: float = DEFAULT_TOLERANCE
    grid: float | None = DEFAULT_GRID
    loss: bool = False
    max_refinements: int = 3

    def __post_init__(self):
        object.__setattr__(self, "picture", Picture.parse(self.picture))
        try:
            object.__setattr__(self, "integrator", Integrator(self.integrator))
        except ValueError:
            msg = f"Unknown integrator `{self.integrator}`"
            raise ValueError(msg) from None
        if not 0 < self.tolerance <= MAX_TOLERANCE:
            msg = f"tolerance must lie in (0, {MAX_TOLERANCE}], got {self.tolerance}"
            raise ValueError(msg)
        if self.grid is not None and self.grid <= 0:
            msg = f"grid spacing must be positive, got {self.grid}"
            raise ValueError(msg)
        if self.max_refinements < 0:
            msg = "max_refinements must be non-negative"
            raise ValueError(msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "picture": self.picture.value,
            "integrator": self.integrator.value,
            "tolerance": self.tolerance,
            "grid_ns": self.grid,
            "loss": self.loss,
        }


@dataclass(frozen=True)
class Trajectory:
    """
    States on an output grid, stored in ``picture``.
    """

    times: np.ndarray
    states: np.ndarray
    system: HybridSystem
    picture: Picture
    lossy: bool = False
    stages: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def norms(self) -> np.ndarray:
        """Squared norm at every grid point."""
        return np.sum(np.abs(self.states) ** 2, axis=1)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(np.abs(self.norms - 1.0)))

    def excitation_series(self) -> np.ndarray:
        populations = np.abs(self.states) ** 2
        return populations @ self.system.basis.excitations / np.sum(populations, axis=1)

    @property
    def excitation_drift(self) -> float:
        series = self.excitation_series()
        return float(np.max(np.abs(series - series[0])))


def _output_times(t0: float, t1: float, grid: float | None, breakpoints: list[float]) -> np.ndarray:
    candidates = list(breakpoints)
    if grid is not None and t1 > t0:
        count = int(np.floor((t1 - t0) / grid + _SAME_TIME))
        regular = t0 + grid * np.arange(count + 1)
        edges = np.asarray(breakpoints)
        candidates += [t for t in regular if np.min(np.abs(edges - t)) > _SAME_TIME]
    return np.array(sorted(set(candidates)))


def _to_schrodinger(system: HybridSystem, columns: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-1j * system.terms.idle_energies * t)[:, None] * columns


def _to_interaction(system: HybridSystem, columns: np.ndarray, t: float) -> np.ndarray:
    return np.exp(1j * system.terms.idle_energies * t)[:, None] * columns


def _piecewise_exact(
    system: HybridSystem,
    columns: np.ndarray,
    schedule: PulseSchedule,
    times: np.ndarray,
    t0: float,
    *,
    loss: bool,
) -> np.ndarray:
    breakpoints = schedule.breakpoints(t0, float(times[-1]))
    out = np.empty((len(times), *columns.shape), dtype=complex)
    out[0] = columns
    psi = columns
    position = 0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        detunings = schedule.detunings_at(0.5 * (a + b))
        generator = -1j * system.terms.assemble(detunings, Picture.SCHRODINGER, loss=loss)
        targets = times[(times > a + _SAME_TIME) & (times <= b + _SAME_TIME)]
        steps = np.diff(np.concatenate([[a], targets]))
        i = 0
        while i < len(steps):
            j = i
            while j + 1 < len(steps) and abs(steps[j + 1] - steps[i]) < 1e-12:
                j += 1
            count = j - i + 1
            if count == 1:
                psi = expm_multiply(generator * steps[i], psi)
                out[position + 1] = psi
            else:
                block = expm_multiply(
                    generator, psi, start=0.0, stop=steps[i] * count, num=count + 1, endpoint=True
                )
                out[position + 1 : position + count + 1] = block[1:]
                psi = block[-1]
            position += count
            i = j + 1
    return out


def _interaction_rhs(system: HybridSystem, schedule: PulseSchedule, shape: tuple[int, int], *, loss: bool):
    terms = system.terms
    energies = terms.idle_energies
    coupling = terms.coupling
    damping = -1j * terms.loss_diagonal if loss else 0.0

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        columns = y.reshape(shape)
        phase = np.exp(1j * energies * t)[:, None]
        diagonal = terms.detuning_diagonal(schedule.detunings_at(t)) + damping
        h_psi = phase * (coupling @ (np.conj(phase) * columns))
        h_psi += diagonal[:, None] * columns
        return (-1j * h_psi).ravel()

    return rhs


def _adaptive_pass(
    system: HybridSystem,
    columns: np.ndarray,
    schedule: PulseSchedule,
    times: np.ndarray,
    tolerance: float,
    max_steps: list[float] | None,
    *,
    loss: bool,
) -> tuple[np.ndarray, list[float]]:
    """Interaction-frame states at ``times`` and the largest step taken per window."""
    shape = columns.shape
    rhs = _interaction_rhs(system, schedule, shape, loss=loss)
    breakpoints = schedule.breakpoints(float(times[0]), float(times[-1]))
    out = np.empty((len(times), *shape), dtype=complex)
    out[0] = columns
    y = columns.ravel().astype(complex)
    largest: list[float] = []
    for w, (a, b) in enumerate(zip(breakpoints[:-1], breakpoints[1:])):
        limit = np.inf if max_steps is None else max_steps[w]
        solution = solve_ivp(
            rhs,
            (a, b),
            y,
            method="DOP853",
            rtol=tolerance,
            atol=tolerance * 1e-2,
            max_step=limit,
            dense_output=True,
        )
        if not solution.success:
            raise ToleranceError(f"integration failed on [{a:.6g}, {b:.6g}] ns: {solution.message}", np.inf)
        largest.append(float(np.max(np.diff(solution.t))) if len(solution.t) > 1 else b - a)
        mask = (times > a + _SAME_TIME) & (times <= b + _SAME_TIME)
        for k in np.flatnonzero(mask):
            out[k] = solution.sol(times[k]).reshape(shape)
        y = solution.y[:, -1]
        last = np.flatnonzero(mask)
        if len(last) and abs(times[last[-1]] - b) < _SAME_TIME:
            out[last[-1]] = y.reshape(shape)
    return out, largest


def _adaptive(
    system: HybridSystem,
    columns: np.ndarray,
    schedule: PulseSchedule,
    times: np.ndarray,
    options: PropagationOptions,
) -> np.ndarray:
    tolerance = options.tolerance
    worst = np.inf
    for attempt in range(options.max_refinements + 1):
        coarse, largest = _adaptive_pass(
            system, columns, schedule, times, tolerance, None, loss=options.loss
        )
        fine, _ = _adaptive_pass(
            system,
            columns,
            schedule,
            times,
            tolerance,
            [h / 2 for h in largest],
            loss=options.loss,
        )
        worst = float(np.max(np.abs(fine - coarse)))
        if worst <= HALVING_FACTOR * options.tolerance:
            log.debug("Adaptive integration accepted after %d refinement(s)", attempt)
            return fine
        log.info(
            "Step-halving difference %.3e above target at tolerance %.1e, refining",
            worst,
            tolerance,
        )
        tolerance /= 10
    msg = f"adaptive integration did not meet tolerance {options.tolerance:g}"
    raise ToleranceError(msg, worst)


def _as_columns(system: HybridSystem, initial: Any) -> tuple[np.ndarray, bool]:
    if isinstance(initial, str):
        return system.state(initial)[:, None], True
    array = np.asarray(initial, dtype=complex)
    single = array.ndim == 1
    columns = array[:, None] if single else array
    if columns.shape[0] != system.dimension:
        msg = f"state dimension {columns.shape[0]} does not match the basis ({system.dimension})"
        raise ValueError(msg)
    return columns, single


def _span(schedule: PulseSchedule, t_span: tuple[float, float] | None) -> tuple[float, float]:
    t0, t1 = (0.0, schedule.duration) if t_span is None else map(float, t_span)
    if t1 < t0:
        msg = f"t_span must be increasing, got ({t0}, {t1})"
        raise ValueError(msg)
    return t0, t1


def evolve_many(
    system: HybridSystem,
    initial: np.ndarray,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    options: PropagationOptions | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Propagate the columns of ``initial`` together.

    :param system: The hybrid system.
    :param initial: ``(dimension, m)`` array of states in ``options.picture`` at ``t_span[0]``.
    :param schedule: Detuning schedule.
    :param t_span: Start and end time in ns; defaults to the whole schedule.
    :param options: Integrator settings.
    :returns: Output times and the ``(times, dimension, m)`` states in ``options.picture``.
    :raises IntegratorError: If the piecewise-exact integrator meets a ramp pulse.
    :raises ToleranceError: If the adaptive integrator cannot meet its tolerance.
    """
    options = options or PropagationOptions()
    columns, _ = _as_columns(system, initial)
    t0, t1 = _span(schedule, t_span)
    times = _output_times(t0, t1, options.grid, schedule.breakpoints(t0, t1))
    if len(times) == 1:
        return times, columns[None, :, :].copy()

    if options.integrator is Integrator.PIECEWISE_EXACT:
        if not schedule.is_step_only:
            msg = "the piecewise-exact integrator requires step-shaped pulses; use adaptive-rk"
            raise IntegratorError(msg)
        start = columns
        if options.picture is Picture.INTERACTION:
            start = _to_schrodinger(system, columns, t0)
        states = _piecewise_exact(system, start, schedule, times, t0, loss=options.loss)
        if options.picture is Picture.INTERACTION:
            phases = np.exp(1j * np.outer(times, system.terms.idle_energies))
            states = phases[:, :, None] * states
    else:
        start = columns
        if options.picture is Picture.SCHRODINGER:
            start = _to_interaction(system, columns, t0)
        states = _adaptive(system, start, schedule, times, options)
        if options.picture is Picture.SCHRODINGER:
            phases = np.exp(-1j * np.outer(times, system.terms.idle_energies))
            states = phases[:, :, None] * states
    return times, states


def evolve(
    system: HybridSystem,
    initial: Any,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    options: PropagationOptions | None = None,
) -> np.ndarray:
    """
    Final state(s) only; accepts a label, a vector or a column matrix.
    """
    options = options or PropagationOptions()
    final_only = PropagationOptions(
        picture=options.picture,
        integrator=options.integrator,
        tolerance=options.tolerance,
        grid=None,
        loss=options.loss,
        max_refinements=options.max_refinements,
    )
    columns, single = _as_columns(system, initial)
    _, states = evolve_many(system, columns, schedule, t_span, final_only)
    return states[-1, :, 0] if single else states[-1]


def propagate(
    initial_state: Any,
    system: HybridSystem,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    options: PropagationOptions | None = None,
) -> Trajectory:
    """
    Solve ``i d|psi>/dt = H(t)|psi>`` on the output grid.

    :param initial_state: State label or vector, in ``options.picture`` at the start time.
    :param system: The hybrid system.
    :param schedule: Detuning schedule.
    :param t_span: Start and end time in ns; defaults to ``(0, schedule.duration)``.
    :param options: Picture, integrator, tolerance, grid spacing and loss switch.
    :returns: The trajectory.
    """
    options = options or PropagationOptions()
    columns, _ = _as_columns(system, initial_state)
    if columns.shape[1] != 1:
        msg = "propagate takes a single state; use evolve_many for batches"
        raise ValueError(msg)
    times, states = evolve_many(system, columns, schedule, t_span, options)
    trajectory = Trajectory(
        times=times,
        states=states[:, :, 0],
        system=system,
        picture=options.picture,
        lossy=options.loss,
        stages=schedule.stages(),
    )
    if not options.loss and trajectory.max_norm_drift > NORM_DRIFT_WARNING:
        log.warning("Norm drift %.3e along the trajectory", trajectory.max_norm_drift)
    return trajectory


def propagate_lossy(
    initial_state: Any,
    system: HybridSystem,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    options: PropagationOptions | None = None,
) -> Trajectory:
    """
    Propagate under ``H(t) - i*sum(Gamma * a^dag a)``.

    :raises ValueError: If no mode of the device has a positive loss rate.
    """
    if not system.device.is_lossy:
        msg = f"device {system.device.name} has no lossy mode"
        raise ValueError(msg)
    options = options or PropagationOptions(picture=Picture.SCHRODINGER)
    lossy = PropagationOptions(
        picture=options.picture,
        integrator=options.integrator,
        tolerance=options.tolerance,
        grid=options.grid,
        loss=True,
        max_refinements=options.max_refinements,
    )
    return propagate(initial_state, system, schedule, t_span, lossy)


def oracle_propagate(
    initial_state: Any,
    system: HybridSystem,
    schedule: PulseSchedule,
    t_span: tuple[float, float] | None = None,
    *,
    picture: Picture | str = Picture.INTERACTION,
    loss: bool = False,
    tolerance: float = 1e-12,
    max_level: int = 10,
    max_dimension: int = ORACLE_MAX_DIMENSION,
) -> np.ndarray:
    """
    Dense reference propagation by products of ``scipy.linalg.expm`` over subdivided
    intervals, refined until two successive subdivisions agree.

    :returns: The final state in ``picture``.
    :raises BasisTooLargeError: If the basis is too large for dense matrices.
    :raises OracleError: If the refinement does not converge.
    """
    picture = Picture.parse(picture)
    if system.dimension > max_dimension:
        raise BasisTooLargeError(system.dimension, max_dimension)
    columns, single = _as_columns(system, initial_state)
    t0, t1 = _span(schedule, t_span)

    energies = system.terms.idle_energies
    coupling = system.terms.coupling.toarray()
    numbers = system.terms.photon_numbers
    damping = system.terms.loss_diagonal if loss else np.zeros_like(energies)
    start = np.exp(-1j * energies * t0)[:, None] * columns if picture is Picture.INTERACTION else columns

    def dense(t: float) -> np.ndarray:
        diagonal = energies - 1j * damping
        for label, value in schedule.detunings_at(t).items():
            diagonal = diagonal + value * numbers[label]
        return coupling + np.diag(diagonal)

    def run(level: int) -> np.ndarray:
        psi = start
        for a, b in schedule.windows(t0, t1):
            pieces = 2**level
            dt = (b - a) / pieces
            for k in range(pieces):
                psi = linalg.expm(-1j * dense(a + (k + 0.5) * dt) * dt) @ psi
        return psi

    previous = run(0)
    change = np.inf
    for level in range(1, max_level + 1):
        current = run(level)
        last_change, change = change, float(np.max(np.abs(current - previous)))
        previous = current
        if change < tolerance or (change < 1e-10 and change > 0.5 * last_change):
            break
    else:
        msg = f"oracle did not converge (last refinement changed the state by {change:.3e})"
        raise OracleError(msg)

    final = previous
    if picture is Picture.INTERACTION:
        final = np.exp(1j * energies * t1)[:, None] * final
    return final[:, 0] if single else final
