import numpy as np
import pytest

from spinphoton.device import DeviceSpec, ModeSpec, NamedState, QubitSpec, SpinEnsembleSpec
from spinphoton.hilbert import HybridSystem
from spinphoton.scenarios import load_scenario


def ghz(value: float) -> float:
    return 2 * np.pi * value


def hybrid_qubit(coupling: float, loss: float = 0.0) -> DeviceSpec:
    """Qubit A of the scalable cell on its own: 22 GHz mode, 19.84 GHz spin ensemble."""
    return DeviceSpec(
        name="hybrid-qubit",
        modes=(ModeSpec("A", ghz(22.0)),),
        spins=(SpinEnsembleSpec("A", ghz(19.84), coupling, "A"),),
        qubits=(QubitSpec("A", "A", "A"),),
        loss={"A": loss} if loss else {},
    )


@pytest.fixture(scope="session")
def scalable_device():
    return load_scenario("fig3b").device


@pytest.fixture(scope="session")
def scalable_system(scalable_device):
    return HybridSystem.build(scalable_device)


@pytest.fixture(scope="session")
def single_cavity_device():
    return load_scenario("fig4").device


@pytest.fixture(scope="session")
def single_cavity_system(single_cavity_device):
    return HybridSystem.build(single_cavity_device)


@pytest.fixture(scope="session")
def isolated_device():
    # 1 kHz coupling: dispersive shifts stay far below 1e-9 rad over a gate
    return hybrid_qubit(ghz(1e-6))


@pytest.fixture(scope="session")
def isolated_system(isolated_device):
    return HybridSystem.build(isolated_device)


@pytest.fixture(scope="session")
def qubit_device():
    return hybrid_qubit(ghz(0.06))


@pytest.fixture(scope="session")
def qubit_system(qubit_device):
    return HybridSystem.build(qubit_device)


@pytest.fixture(scope="session")
def leaky_cavity():
    return DeviceSpec(
        name="leaky-cavity",
        modes=(ModeSpec("A", ghz(22.0)),),
        loss={"A": ghz(1e-5)},
        states=(NamedState("photon", photons=(("A", 1),)),),
    )
