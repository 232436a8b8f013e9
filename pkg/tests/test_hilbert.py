import numpy as np
import pytest

from spinphoton.errors import BasisTooLargeError, UnknownLabelError
from spinphoton.hilbert import (
    BasisState,
    HybridSystem,
    Picture,
    assemble_hamiltonian,
    basis_dimension,
    build_basis,
    build_operators,
    default_cap,
    logical_labels,
    logical_state,
)
from spinphoton.scenarios import load_scenario

from .conftest import ghz


class TestBasis:
    def test_dimensions(self, scalable_system, single_cavity_system):
        assert scalable_system.basis.cap == 2
        assert scalable_system.dimension == 36
        assert single_cavity_system.dimension == 21

    @pytest.mark.parametrize("cap", [0, 1, 2, 3])
    def test_dimension_formula(self, scalable_device, cap):
        assert len(build_basis(scalable_device, cap)) == basis_dimension(scalable_device, cap)

    def test_ordering(self, scalable_system):
        basis = scalable_system.basis
        assert basis[0] == BasisState((0, 0, 0, 0), (0, 0), 0)
        excitations = [state.excitation for state in basis]
        assert excitations == sorted(excitations)
        assert sum(1 for k in excitations if k == 1) == 7

    def test_cpb_levels_count_as_excitations(self, scalable_system):
        zeta = scalable_system.basis[scalable_system.index("zeta")]
        assert zeta.cpb == 2
        assert zeta.excitation == 2

    def test_too_large(self, scalable_device):
        with pytest.raises(BasisTooLargeError, match="36 exceeds the configured limit 10") as e:
            HybridSystem.build(scalable_device, max_dimension=10)
        assert e.value.dimension == 36
        assert e.value.limit == 10

    def test_negative_cap(self, scalable_device):
        with pytest.raises(ValueError, match="non-negative"):
            build_basis(scalable_device, -1)

    def test_default_cap(self, scalable_device, isolated_device):
        assert default_cap(scalable_device) == 2
        assert default_cap(isolated_device) == 1


class TestLabels:
    def test_logical_labels(self, scalable_device, isolated_device):
        assert logical_labels(scalable_device) == ["00", "01", "10", "11"]
        assert logical_labels(isolated_device) == ["0", "1"]

    def test_logical_states(self, scalable_system):
        basis = scalable_system.basis
        assert scalable_system.index("11") == basis.index(basis.make({"A": 1, "Ap": 1}))
        assert scalable_system.index("|10>") == basis.index(basis.make({"A": 1}, {"Ap": 1}))
        assert scalable_system.index("00") == basis.index(basis.make(spins={"A": 1, "Ap": 1}))
        assert scalable_system.index("vac") == 0

    def test_named_states(self, scalable_system):
        basis = scalable_system.basis
        assert scalable_system.index("eta") == basis.index(basis.make({"B": 1, "Bp": 1}))
        assert scalable_system.index("xi") == basis.index(basis.make({"Bp": 1}, cpb=1))
        vector = scalable_system.state("xi")
        assert vector.shape == (36,)
        assert np.sum(np.abs(vector)) == 1.0

    def test_unknown_labels(self, scalable_system):
        with pytest.raises(UnknownLabelError, match="Unknown state label `012`"):
            scalable_system.state("012")
        with pytest.raises(UnknownLabelError, match="Unknown mode `C`"):
            scalable_system.basis.make({"C": 1})

    def test_state_outside_the_cap(self, scalable_device):
        system = HybridSystem.build(scalable_device, excitation_cap=1)
        with pytest.raises(UnknownLabelError, match="not in the basis"):
            system.state("11")

    def test_logical_state_vector(self, scalable_system):
        vector = logical_state(scalable_system.basis, scalable_system.device, "10")
        assert vector[scalable_system.index("10")] == 1.0
        assert np.count_nonzero(vector) == 1


class TestOperators:
    def test_lowering(self, scalable_system):
        basis = scalable_system.basis
        lowered = scalable_system.operators.photon_lowering["A"] @ scalable_system.state("11")
        np.testing.assert_allclose(lowered, scalable_system.state(basis.make({"Ap": 1})))

    def test_number_operators(self, scalable_system):
        basis = scalable_system.basis
        operators = scalable_system.operators
        a = operators.photon_lowering["A"]
        number = operators.photon_number["A"]
        np.testing.assert_allclose((a.conj().T @ a).toarray(), number.toarray())
        slot = basis.mode_labels.index("A")
        np.testing.assert_allclose(number.diagonal().real, [s.photons[slot] for s in basis])
        np.testing.assert_allclose(
            operators.excitation.diagonal().real, [s.excitation for s in basis]
        )

    def test_foreign_basis(self, scalable_system, isolated_device):
        with pytest.raises(ValueError, match="basis was not built from this device"):
            build_operators(isolated_device, scalable_system.basis)


class TestHamiltonian:
    def test_couplings(self, scalable_system):
        basis = scalable_system.basis
        coupling = scalable_system.terms.coupling
        photon_a = basis.index(basis.make({"A": 1}))
        spin_a = basis.index(basis.make(spins={"A": 1}))
        photon_b = basis.index(basis.make({"B": 1}))
        cpb_1 = basis.index(basis.make(cpb=1))
        assert coupling[photon_a, spin_a] == pytest.approx(ghz(0.06) / 2)
        assert coupling[photon_a, photon_b] == pytest.approx(-ghz(0.025))
        assert coupling[photon_b, cpb_1] == pytest.approx(ghz(0.06) / 2)

        two_photons = basis.index(basis.make({"B": 2}))
        mixed = basis.index(basis.make({"B": 1}, cpb=1))
        assert coupling[two_photons, mixed] == pytest.approx(np.sqrt(2) * ghz(0.06) / 2)

    def test_hermitian_and_excitation_conserving(self, scalable_system):
        coupling = scalable_system.terms.coupling
        assert abs(coupling - coupling.conj().T).max() == 0
        rows, cols = coupling.nonzero()
        excitations = scalable_system.basis.excitations
        np.testing.assert_array_equal(excitations[rows], excitations[cols])

    def test_idle_energies(self, scalable_system):
        energies = scalable_system.terms.idle_energies
        assert energies[scalable_system.index("11")] == pytest.approx(ghz(22.0 + 42.0))
        assert energies[scalable_system.index("00")] == pytest.approx(ghz(19.84 + 45.96))
        assert energies[scalable_system.index("zeta")] == pytest.approx(ghz(27.4 + 34.0))

    def test_pictures(self, scalable_system):
        terms = scalable_system.terms
        detunings = {"B": ghz(1.5), "A": -ghz(1.5)}
        schrodinger = terms.assemble(detunings, Picture.SCHRODINGER)
        interaction = terms.assemble(detunings, "interaction", t=0.0)
        np.testing.assert_allclose(
            (schrodinger - interaction).diagonal(), terms.idle_energies, atol=1e-9
        )
        later = terms.assemble(detunings, Picture.INTERACTION, t=3.7).toarray()
        np.testing.assert_allclose(later, later.conj().T, atol=1e-12)
        np.testing.assert_allclose(np.abs(later), np.abs(interaction.toarray()), atol=1e-12)

    def test_detuning_on_photons_only(self, scalable_system):
        diagonal = scalable_system.terms.detuning_diagonal({"B": 2.0})
        assert diagonal[scalable_system.index("eta")] == 2.0
        assert diagonal[scalable_system.index("00")] == 0.0
        with pytest.raises(UnknownLabelError, match="Unknown mode `C`"):
            scalable_system.terms.detuning_diagonal({"C": 1.0})

    def test_loss(self):
        system = HybridSystem.build(load_scenario("fig5b").device)
        terms = system.terms
        gamma = ghz(1e-5)
        assert terms.loss_diagonal[system.index("11")] == pytest.approx(2 * gamma)
        assert terms.loss_diagonal[system.index("00")] == 0.0
        lossy = terms.assemble({}, Picture.SCHRODINGER, loss=True)
        assert lossy[system.index("eta"), system.index("eta")].imag == pytest.approx(-2 * gamma)

    def test_out_of_bound_detuning_is_logged(self, scalable_system, caplog):
        with caplog.at_level("WARNING"):
            assemble_hamiltonian(
                scalable_system.operators, scalable_system.device, {"A": ghz(5.0)}
            )
        assert "exceeds its tuning bound" in caplog.text

    def test_picture_parse(self):
        assert Picture.parse("schrodinger") is Picture.SCHRODINGER
        with pytest.raises(ValueError, match="Unknown picture `heisenberg`"):
            Picture.parse("heisenberg")
