from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from enum import Enum
from math import comb
from typing import Any

import numpy as np
from scipy import sparse

from spinphoton.device import CPB_LEVELS, DeviceSpec
from spinphoton.errors import BasisTooLargeError, UnknownLabelError

log = logging.getLogger(__name__)

DEFAULT_MAX_DIMENSION = 20_000


class Picture(str, Enum):
    SCHRODINGER = "schrodinger"
    INTERACTION = "interaction"

    @classmethod
    def parse(cls, value: str | Picture) -> Picture:
        try:
            return cls(value)
        except ValueError:
            msg = f"Unknown picture `{value}` (expected schrodinger or interaction)"
            raise ValueError(msg) from None


@dataclass(frozen=True, order=True)
class BasisState:
    """
    Occupations of every mode and spin ensemble, and the CPB level.

    Field order follows ``DeviceSpec.modes`` and ``DeviceSpec.spins``.
    """

    photons: tuple[int, ...]
    spins: tuple[int, ...] = ()
    cpb: int = 0

    @property
    def excitation(self) -> int:
        return sum(self.photons) + sum(self.spins) + self.cpb


class BasisIndex:
    """
    Ordered product basis truncated to total excitation ``k <= cap``.

    States are sorted by ``(k, photons, spins, cpb)`` so the index of a state only
    depends on the device layout and the cap.
    """

    def __init__(
        self,
        mode_labels: tuple[str, ...],
        spin_labels: tuple[str, ...],
        cap: int,
        states: list[BasisState],
        *,
        has_cpb: bool,
    ):
        self.mode_labels = mode_labels
        self.spin_labels = spin_labels
        self.has_cpb = has_cpb
        self.cap = cap
        self.states = tuple(sorted(states, key=lambda s: (s.excitation, s.photons, s.spins, s.cpb)))
        self._index = {state: i for i, state in enumerate(self.states)}
        if len(self._index) != len(self.states):
            msg = "duplicate basis states"
            raise ValueError(msg)
        self.excitations = np.array([s.excitation for s in self.states], dtype=float)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[BasisState]:
        return iter(self.states)

    def __getitem__(self, i: int) -> BasisState:
        return self.states[i]

    def __contains__(self, state: object) -> bool:
        return state in self._index

    @property
    def dimension(self) -> int:
        return len(self.states)

    def index(self, state: BasisState) -> int:
        try:
            return self._index[state]
        except KeyError:
            msg = f"{self.describe(state)} is not in the basis (excitation cap {self.cap})"
            raise UnknownLabelError(msg) from None

    def make(
        self,
        photons: Mapping[str, int] | None = None,
        spins: Mapping[str, int] | None = None,
        cpb: int = 0,
    ) -> BasisState:
        photons = dict(photons or {})
        spins = dict(spins or {})
        for label in photons:
            if label not in self.mode_labels:
                msg = f"Unknown mode `{label}`"
                raise UnknownLabelError(msg)
        for label in spins:
            if label not in self.spin_labels:
                msg = f"Unknown spin ensemble `{label}`"
                raise UnknownLabelError(msg)
        return BasisState(
            photons=tuple(photons.get(label, 0) for label in self.mode_labels),
            spins=tuple(spins.get(label, 0) for label in self.spin_labels),
            cpb=cpb,
        )

    def describe(self, state: BasisState) -> str:
        parts = [f"n_{label}={n}" for label, n in zip(self.mode_labels, state.photons) if n]
        parts += [f"m_{label}={m}" for label, m in zip(self.spin_labels, state.spins) if m]
        if state.cpb:
            parts.append(f"j={state.cpb}")
        return "|" + (",".join(parts) or "vac") + ">"


def _compositions(slots: int, total: int) -> Iterator[tuple[int, ...]]:
    """All non-negative integer tuples of length ``slots`` with sum <= ``total``."""
    if slots == 0:
        yield ()
        return
    for first in range(total + 1):
        for rest in _compositions(slots - 1, total - first):
            yield (first, *rest)


def basis_dimension(device: DeviceSpec, excitation_cap: int) -> int:
    bosons = len(device.modes) + len(device.spins)
    top = min(CPB_LEVELS - 1, excitation_cap) if device.cpb is not None else 0
    return sum(comb(bosons + excitation_cap - j, bosons) for j in range(top + 1))


def build_basis(
    device: DeviceSpec, excitation_cap: int, max_dimension: int = DEFAULT_MAX_DIMENSION
) -> BasisIndex:
    """
    Enumerate every basis state with total excitation at most ``excitation_cap``.

    :param device: Device whose modes, spin ensembles and CPB span the product space.
    :param excitation_cap: Largest total excitation kept.
    :param max_dimension: Refuse to build larger bases.
    :returns: The ordered basis.
    :raises BasisTooLargeError: If the basis would exceed ``max_dimension``.
    """
    if excitation_cap < 0:
        msg = f"excitation cap must be non-negative, got {excitation_cap}"
        raise ValueError(msg)
    dimension = basis_dimension(device, excitation_cap)
    if dimension > max_dimension:
        raise BasisTooLargeError(dimension, max_dimension)

    n_modes = len(device.modes)
    n_bosons = n_modes + len(device.spins)
    top = min(CPB_LEVELS - 1, excitation_cap) if device.cpb is not None else 0
    states = [
        BasisState(photons=occupations[:n_modes], spins=occupations[n_modes:], cpb=level)
        for level in range(top + 1)
        for occupations in _compositions(n_bosons, excitation_cap - level)
    ]
    log.debug("Built basis of %d states for %s (cap %d)", len(states), device.name, excitation_cap)
    return BasisIndex(
        device.mode_labels,
        device.spin_labels,
        excitation_cap,
        states,
        has_cpb=device.cpb is not None,
    )


@dataclass(frozen=True)
class OperatorSet:
    basis: BasisIndex
    photon_lowering: dict[str, sparse.csr_matrix]
    spin_lowering: dict[str, sparse.csr_matrix]
    cpb_lowering: tuple[sparse.csr_matrix, ...]
    cpb_projectors: tuple[sparse.csr_matrix, ...]
    photon_number: dict[str, sparse.csr_matrix]
    spin_number: dict[str, sparse.csr_matrix]
    excitation: sparse.csr_matrix


def _lowering(basis: BasisIndex, lower) -> sparse.csr_matrix:
    rows, cols, data = [], [], []
    for col, state in enumerate(basis):
        result = lower(state)
        if result is None:
            continue
        target, amplitude = result
        rows.append(basis.index(target))
        cols.append(col)
        data.append(amplitude)
    n = len(basis)
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n), dtype=complex).tocsr()


def _diagonal(values: np.ndarray) -> sparse.csr_matrix:
    return sparse.diags(values.astype(complex), format="csr")


def build_operators(device: DeviceSpec, basis: BasisIndex) -> OperatorSet:
    """
    Ladder, CPB and number operators over ``basis``.

    :param device: The device the basis was built from.
    :param basis: Basis from :func:`build_basis`.
    :returns: Sparse operators in CSR form.
    """
    if basis.mode_labels != device.mode_labels or basis.spin_labels != device.spin_labels:
        msg = "basis was not built from this device"
        raise ValueError(msg)

    def photon(i: int):
        def lower(state: BasisState):
            n = state.photons[i]
            if n == 0:
                return None
            photons = list(state.photons)
            photons[i] -= 1
            return BasisState(tuple(photons), state.spins, state.cpb), np.sqrt(n)

        return lower

    def spin(i: int):
        def lower(state: BasisState):
            m = state.spins[i]
            if m == 0:
                return None
            spins = list(state.spins)
            spins[i] -= 1
            return BasisState(state.photons, tuple(spins), state.cpb), np.sqrt(m)

        return lower

    def cpb(j: int):
        def lower(state: BasisState):
            if state.cpb != j + 1:
                return None
            return BasisState(state.photons, state.spins, j), 1.0

        return lower

    photon_lowering = {
        label: _lowering(basis, photon(i)) for i, label in enumerate(device.mode_labels)
    }
    spin_lowering = {label: _lowering(basis, spin(i)) for i, label in enumerate(device.spin_labels)}
    cpb_lowering: tuple[sparse.csr_matrix, ...] = ()
    cpb_projectors: tuple[sparse.csr_matrix, ...] = ()
    if device.cpb is not None:
        levels = np.array([s.cpb for s in basis])
        cpb_lowering = tuple(_lowering(basis, cpb(j)) for j in range(CPB_LEVELS - 1))
        cpb_projectors = tuple(
            _diagonal((levels == j).astype(float)) for j in range(CPB_LEVELS)
        )

    photon_number = {
        label: _diagonal(np.array([s.photons[i] for s in basis], dtype=float))
        for i, label in enumerate(device.mode_labels)
    }
    spin_number = {
        label: _diagonal(np.array([s.spins[i] for s in basis], dtype=float))
        for i, label in enumerate(device.spin_labels)
    }
    return OperatorSet(
        basis=basis,
        photon_lowering=photon_lowering,
        spin_lowering=spin_lowering,
        cpb_lowering=cpb_lowering,
        cpb_projectors=cpb_projectors,
        photon_number=photon_number,
        spin_number=spin_number,
        excitation=_diagonal(basis.excitations),
    )


@dataclass(frozen=True)
class CouplingTerm:
    """
    ``strength * operator + h.c.``, where ``operator`` raises one subsystem and lowers
    another.
    """

    label: str
    strength: float
    operator: sparse.csr_matrix

    def hermitian(self) -> sparse.csr_matrix:
        term = self.strength * self.operator
        return (term + term.conj().T).tocsr()


@dataclass(frozen=True)
class HamiltonianTerms:
    """
    The pieces of the RWA Hamiltonian, kept apart so the propagators can recombine them
    cheaply at every time step.
    """

    idle_energies: np.ndarray
    interaction: tuple[CouplingTerm, ...]
    hopping: tuple[CouplingTerm, ...]
    photon_numbers: dict[str, np.ndarray]
    loss_diagonal: np.ndarray
    coupling: sparse.csr_matrix

    def __post_init__(self):
        coo = self.coupling.tocoo()
        object.__setattr__(self, "_rows", coo.row)
        object.__setattr__(self, "_cols", coo.col)
        object.__setattr__(self, "_data", coo.data)

    @property
    def dimension(self) -> int:
        return len(self.idle_energies)

    def detuning_diagonal(self, detunings: Mapping[str, float]) -> np.ndarray:
        diagonal = np.zeros(self.dimension)
        for label, value in detunings.items():
            if label not in self.photon_numbers:
                msg = f"Unknown mode `{label}`"
                raise UnknownLabelError(msg)
            if value:
                diagonal += value * self.photon_numbers[label]
        return diagonal

    def dressed_coupling(self, t: float) -> sparse.csr_matrix:
        """Off-diagonal part in the interaction picture at time ``t``."""
        rows, cols = self._rows, self._cols  # type: ignore[attr-defined]
        phases = np.exp(1j * (self.idle_energies[rows] - self.idle_energies[cols]) * t)
        return sparse.csr_matrix(
            (self._data * phases, (rows, cols)),  # type: ignore[attr-defined]
            shape=self.coupling.shape,
        )

    def assemble(
        self,
        detunings: Mapping[str, float],
        picture: Picture | str = Picture.SCHRODINGER,
        t: float = 0.0,
        *,
        loss: bool = False,
    ) -> sparse.csr_matrix:
        picture = Picture.parse(picture)
        diagonal = self.detuning_diagonal(detunings).astype(complex)
        if picture is Picture.SCHRODINGER:
            diagonal += self.idle_energies
            off_diagonal = self.coupling
        else:
            off_diagonal = self.dressed_coupling(t)
        if loss:
            diagonal -= 1j * self.loss_diagonal
        return (off_diagonal + sparse.diags(diagonal, format="csr")).tocsr()


def build_hamiltonian_terms(operators: OperatorSet, device: DeviceSpec) -> HamiltonianTerms:
    """
    Idle energies, couplings and detuning operators of the device.

    :param operators: Operators from :func:`build_operators`.
    :param device: The device.
    :returns: The Hamiltonian split into its static, coupling and control parts.
    """
    basis = operators.basis
    idle = np.zeros(len(basis))
    for i, mode in enumerate(device.modes):
        idle += mode.idle_frequency * np.array([s.photons[i] for s in basis])
    for i, spin in enumerate(device.spins):
        idle += spin.gap * np.array([s.spins[i] for s in basis])
    if device.cpb is not None:
        levels = device.cpb.levels
        energies = np.array(levels.energies) - levels.energies[0]
        idle += energies[[s.cpb for s in basis]]

    interaction = []
    for spin in device.spins:
        a = operators.photon_lowering[spin.mode]
        b = operators.spin_lowering[spin.label]
        interaction.append(
            CouplingTerm(f"spin {spin.label}-{spin.mode}", spin.coupling / 2, (a.conj().T @ b).tocsr())
        )
    if device.cpb is not None:
        for c in device.cpb.couplings:
            a = operators.photon_lowering[c.mode]
            sigma = operators.cpb_lowering[c.transition]
            interaction.append(
                CouplingTerm(
                    f"cpb {c.transition}-{c.transition + 1} {c.mode}",
                    c.strength / 2,
                    (a.conj().T @ sigma).tocsr(),
                )
            )
    hopping = [
        CouplingTerm(
            f"hop {first}-{second}",
            -hop.rate,
            (
                operators.photon_lowering[first].conj().T @ operators.photon_lowering[second]
            ).tocsr(),
        )
        for hop in device.hops
        for first, second in (hop.modes,)
    ]

    n = len(basis)
    coupling = sparse.csr_matrix((n, n), dtype=complex)
    for term in (*interaction, *hopping):
        coupling = coupling + term.hermitian()
    coupling = coupling.tocsr()
    coupling.eliminate_zeros()
    coupling.sort_indices()

    photon_numbers = {
        label: operators.photon_number[label].diagonal().real for label in device.mode_labels
    }
    loss = np.zeros(n)
    for label, rate in device.loss.items():
        loss += rate * photon_numbers[label]

    return HamiltonianTerms(
        idle_energies=idle,
        interaction=tuple(interaction),
        hopping=tuple(hopping),
        photon_numbers=photon_numbers,
        loss_diagonal=loss,
        coupling=coupling,
    )


def out_of_bounds(device: DeviceSpec, detunings: Mapping[str, float]) -> list[str]:
    return [
        f"detuning of mode {label} ({value / (2 * np.pi):.4g} GHz) exceeds its tuning bound"
        for label, value in detunings.items()
        if not device.mode(label).within_bounds(value)
    ]


def assemble_hamiltonian(
    operators: OperatorSet,
    device: DeviceSpec,
    detunings: Mapping[str, float],
    picture: Picture | str = Picture.SCHRODINGER,
    t: float = 0.0,
    *,
    loss: bool = False,
) -> sparse.csr_matrix:
    """
    Full Hamiltonian at time ``t`` for the given mode detunings.

    Detunings beyond a mode's tuning bound are logged as warnings, not rejected.

    :param operators: Operators over the basis.
    :param device: The device.
    :param detunings: Mode label to detuning in rad/ns; missing modes are idle.
    :param picture: ``schrodinger`` or ``interaction`` (idle part removed, couplings
        dressed with their idle frequency mismatch).
    :param t: Time in ns; only used by the interaction picture.
    :param loss: Add the non-Hermitian ``-i*Gamma*a^dag a`` terms.
    :returns: Sparse CSR matrix.
    """
    picture = Picture.parse(picture)
    for message in out_of_bounds(device, detunings):
        log.warning(message)
    terms = build_hamiltonian_terms(operators, device)
    return terms.assemble(detunings, picture, t, loss=loss)


def resolve_state(basis: BasisIndex, device: DeviceSpec, label: str | BasisState) -> BasisState:
    """
    Basis state for a logical label (``"10"`` = first qubit ``|1>``, second ``|0>``), a
    named state of the device, or a :class:`BasisState`.
    """
    if isinstance(label, BasisState):
        return label
    text = label.strip()
    if text.startswith("|") and text.endswith(">"):
        text = text[1:-1]
    if text in ("vac", "vacuum"):
        return basis.make()
    for state in device.states:
        if state.label == text:
            return basis.make(dict(state.photons), dict(state.spins), state.cpb)
    if device.qubits and len(text) == len(device.qubits) and set(text) <= {"0", "1"}:
        photons: dict[str, int] = {}
        spins: dict[str, int] = {}
        for digit, qubit in zip(text, device.qubits):
            if digit == "1":
                photons[qubit.mode] = photons.get(qubit.mode, 0) + 1
            else:
                spins[qubit.spin] = spins.get(qubit.spin, 0) + 1
        return basis.make(photons, spins)
    msg = f"Unknown state label `{label}`"
    raise UnknownLabelError(msg)


def logical_state(basis: BasisIndex, device: DeviceSpec, label: str | BasisState) -> np.ndarray:
    """
    Unit basis vector for a logical, named or explicit basis state.

    :raises UnknownLabelError: For labels the device does not define, or states outside
        the basis.
    """
    vector = np.zeros(len(basis), dtype=complex)
    vector[basis.index(resolve_state(basis, device, label))] = 1.0
    return vector


def logical_labels(device: DeviceSpec) -> list[str]:
    """Computational basis labels, first qubit most significant."""
    n = len(device.qubits)
    return [format(i, f"0{n}b") for i in range(2**n)] if n else []


def default_cap(device: DeviceSpec) -> int:
    named = [sum(n for _, n in s.photons) + sum(n for _, n in s.spins) + s.cpb for s in device.states]
    return max([len(device.qubits), 1, *named])


@dataclass(frozen=True)
class HybridSystem:
    """
    A device together with its basis, operators and Hamiltonian terms.

    Immutable once built, so one instance can be shared by many propagations.
    """

    device: DeviceSpec
    basis: BasisIndex
    operators: OperatorSet
    terms: HamiltonianTerms

    @classmethod
    def build(
        cls,
        device: DeviceSpec,
        excitation_cap: int | None = None,
        max_dimension: int = DEFAULT_MAX_DIMENSION,
    ) -> HybridSystem:
        cap = default_cap(device) if excitation_cap is None else excitation_cap
        basis = build_basis(device, cap, max_dimension)
        operators = build_operators(device, basis)
        return cls(device, basis, operators, build_hamiltonian_terms(operators, device))

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def state(self, label: str | BasisState) -> np.ndarray:
        return logical_state(self.basis, self.device, label)

    def index(self, label: str | BasisState) -> int:
        return self.basis.index(resolve_state(self.basis, self.device, label))

    def states(self, labels: list[str]) -> np.ndarray:
        """Column matrix of the labelled basis vectors."""
        return np.column_stack([self.state(label) for label in labels])

    def to_dict(self) -> dict[str, Any]:
        return {"device": self.device.name, "excitation_cap": self.basis.cap, "dimension": self.dimension}
