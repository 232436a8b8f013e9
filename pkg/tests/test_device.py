from dataclasses import replace

import numpy as np
import pytest

from spinphoton.device import (
    CPBSpec,
    DeviceSpec,
    HoppingLink,
    cpb_spectrum,
    load_device,
    validate_device,
)
from spinphoton.errors import ConfigError, CPBConvergenceError
from spinphoton.scenarios import available_scenarios, load_scenario

from .conftest import ghz

DEVICE = """
device:
  name: toy

modes:
  A: {fundamental: 22 GHz}

spins:
  A:
    gap: 19.84 GHz
    Gbar: 60 MHz
    mode: A
    count: 1.0e+12
    g: 60 Hz

loss:
  A: 10 kHz

qubits:
  - {label: A, spin: A, mode: A}
"""


class TestDeviceSpec:
    def test_scalable_frequencies(self, scalable_device):
        assert scalable_device.mode_labels == ("A", "Ap", "B", "Bp")
        assert scalable_device.mode("Ap").idle_frequency == pytest.approx(ghz(42.0))
        assert scalable_device.mode("Bp").idle_frequency == pytest.approx(ghz(37.5))
        assert scalable_device.mode("B").max_detuning == pytest.approx(ghz(2.5))
        assert scalable_device.cpb.levels.gaps == pytest.approx((ghz(27.4), ghz(34.0)))

    def test_lookups(self, scalable_device):
        assert scalable_device.hop_partners("A") == [("B", pytest.approx(ghz(0.025)))]
        assert [c.transition for c in scalable_device.cpb_couplings("Bp")] == [0, 1]
        assert [s.label for s in scalable_device.spins_on("Ap")] == ["Ap"]
        with pytest.raises(KeyError, match="Unknown mode `C`"):
            scalable_device.mode("C")
        with pytest.raises(KeyError, match="Unknown qubit"):
            scalable_device.qubit("B")

    def test_load_device(self):
        device = load_device(DEVICE)
        assert device.name == "toy"
        assert device.mode("A").harmonic == 1
        assert device.mode("A").tuning_range == 0.1
        assert device.spin("A").coupling == pytest.approx(ghz(0.06))
        assert device.loss_rate("A") == pytest.approx(ghz(1e-5))
        assert device.is_lossy
        assert validate_device(device).ok

    def test_to_dict_from_dict(self, scalable_device):
        restored = DeviceSpec.from_dict(scalable_device.to_dict())
        assert restored.name == scalable_device.name
        assert restored.mode_labels == scalable_device.mode_labels
        assert restored.qubits == scalable_device.qubits
        assert restored.states == scalable_device.states
        for before, after in zip(scalable_device.spins, restored.spins):
            assert after.gap == pytest.approx(before.gap, rel=1e-14)
            assert after.coupling == pytest.approx(before.coupling, rel=1e-14)
        assert restored.cpb.levels.gaps == pytest.approx(scalable_device.cpb.levels.gaps)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r"modes.A: unknown key\(s\) frequency"):
            load_device("modes:\n  A: {fundamental: 22 GHz, frequency: 3}\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"unknown section\(s\) hopz"):
            load_device(DEVICE + "hopz:\n  - {modes: [A, A], kappa: 25 MHz}\n")
        with pytest.raises(ConfigError, match=r"unknown section\(s\) scenario"):
            load_device(DEVICE + "scenario: {name: toy, gate: ry}\n")

    def test_missing_modes(self):
        with pytest.raises(ConfigError, match="no modes defined"):
            load_device("device: {name: empty}\n")

    def test_cpb_needs_one_description(self):
        text = DEVICE + "cpb: {gaps: [27.4 GHz, 34.0 GHz], charging_energy: 4.9 GHz}\n"
        with pytest.raises(ConfigError, match="not both"):
            load_device(text)
        with pytest.raises(ConfigError, match="cpb.gaps: expected two"):
            load_device(DEVICE + "cpb: {gaps: [27.4 GHz]}\n")


class TestValidateDevice:
    @pytest.mark.parametrize("name", ["fig3a", "fig3b", "fig4", "fig5a", "fig5b"])
    def test_builtin_devices_are_clean(self, name):
        report = validate_device(load_scenario(name).device)
        assert report.errors == []

    def test_registry(self):
        assert available_scenarios() == ["fig3a", "fig3b", "fig4", "fig5a", "fig5b"]

    def test_spin_count_consistency(self, qubit_device):
        spin = qubit_device.spins[0]
        consistent = replace(spin, count=1e12, single_coupling=spin.coupling / 1e6)
        assert validate_device(replace(qubit_device, spins=(consistent,))).ok

        broken = replace(consistent, single_coupling=2 * consistent.single_coupling)
        report = validate_device(replace(qubit_device, spins=(broken,)))
        assert report.errors == ["spin ensemble A: Gbar does not equal sqrt(N)*g"]

        half = replace(spin, count=1e12)
        report = validate_device(replace(qubit_device, spins=(half,)))
        assert "give both count and g" in report.errors[0]

    def test_broken_references(self, qubit_device):
        spin = replace(qubit_device.spins[0], mode="Z", coupling=0.0)
        device = replace(
            qubit_device,
            spins=(spin,),
            hops=(HoppingLink(("A", "A"), ghz(0.025)),),
            loss={"Q": -1.0},
        )
        errors = validate_device(device).errors
        assert "spin ensemble A: collective coupling must be positive" in errors
        assert "spin ensemble A: unknown mode `Z`" in errors
        assert "hop A-A: a mode cannot hop to itself" in errors
        assert "loss: unknown mode `Q`" in errors
        assert "qubit A: spin ensemble is not coupled to its mode" in errors

    def test_idle_resonance_warning(self, qubit_device):
        spin = replace(qubit_device.spins[0], gap=qubit_device.modes[0].idle_frequency)
        report = validate_device(replace(qubit_device, spins=(spin,)))
        assert report.ok
        assert report.warnings == [
            "idle resonance: spin ensemble A is detuned from mode A by only 0 couplings"
        ]

    def test_cpb_level_of_named_state(self, qubit_device, scalable_device):
        device = replace(qubit_device, states=scalable_device.states[2:])
        errors = validate_device(device).errors
        assert "state zeta: device has no CPB" in errors

    def test_report_to_dict(self, qubit_device):
        assert validate_device(qubit_device).to_dict() == {"errors": [], "warnings": []}


class TestCPBSpectrum:
    def test_charge_qubit_is_anharmonic(self):
        charging = ghz(4.9)
        levels = cpb_spectrum(charging, 6.2 * charging, 0.5)
        gap_01, gap_12 = levels.gaps
        assert gap_01 > 0
        assert gap_12 > 0
        assert abs(gap_01 - gap_12) / gap_01 > 0.05
        assert levels.energies[0] < levels.energies[1] < levels.energies[2]
        assert all(element > 0 for element in levels.charge_elements)

    def test_converges_by_twenty_charges(self):
        charging = ghz(4.9)
        coarse = cpb_spectrum(charging, 6.2 * charging, 0.5, charge_cutoff=20)
        fine = cpb_spectrum(charging, 6.2 * charging, 0.5, charge_cutoff=40)
        assert coarse.gaps == pytest.approx(fine.gaps, rel=1e-10)

    def test_pure_charging_limit(self):
        levels = cpb_spectrum(1.0, 0.0, 0.0)
        np.testing.assert_allclose(levels.energies, [0.0, 4.0, 4.0], atol=1e-12)

    def test_degenerate_at_the_sweet_spot_without_tunnelling(self):
        levels = cpb_spectrum(ghz(4.9), 0.0, 0.5)
        assert levels.gaps == pytest.approx((0.0, 8 * ghz(4.9)), abs=1e-9)
        assert levels.gaps[1] == pytest.approx(246.3, abs=0.05)

    @pytest.mark.parametrize("offset", [0.1, 0.25, 0.4])
    def test_gate_charge_mirror_symmetry(self, offset):
        charging = ghz(4.9)
        below = cpb_spectrum(charging, 6.2 * charging, 0.5 - offset)
        above = cpb_spectrum(charging, 6.2 * charging, 0.5 + offset)
        np.testing.assert_allclose(below.energies, above.energies, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(below.charge_elements, above.charge_elements, rtol=1e-6)

    def test_truncated_basis_does_not_converge(self):
        with pytest.raises(CPBConvergenceError, match="not converged") as excinfo:
            cpb_spectrum(1.0, 200.0, 0.5, charge_cutoff=3)
        assert excinfo.value.quantity == "gap 0-1"

    def test_invalid_arguments(self):
        with pytest.raises(ValueError, match="at least 3"):
            cpb_spectrum(1.0, 1.0, charge_cutoff=2)
        with pytest.raises(ValueError, match="charging energy must be positive"):
            cpb_spectrum(0.0, 1.0)
        with pytest.raises(ValueError, match="Josephson"):
            cpb_spectrum(1.0, -1.0)

    def test_device_from_charge_parameters(self):
        spec = CPBSpec(charging_energy=ghz(4.9), josephson_energy=6.2 * ghz(4.9))
        assert spec.levels.gaps == pytest.approx(cpb_spectrum(ghz(4.9), 6.2 * ghz(4.9)).gaps)
        with pytest.raises(ValueError, match="needs either gaps"):
            CPBSpec().levels  # noqa: B018
