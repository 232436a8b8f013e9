from spinphoton.compiler import compile_cz, compile_ry, compile_rz, phase_ledger
from spinphoton.device import DeviceSpec, cpb_spectrum, load_device, validate_device
from spinphoton.dynamics import PropagationOptions, oracle_propagate, propagate, propagate_lossy
from spinphoton.hilbert import HybridSystem, Picture
from spinphoton.metrics import fidelity_loss, gate_matrix, norm_deficit
from spinphoton.schedule import Pulse, PulseSchedule

__all__ = [
    "DeviceSpec",
    "HybridSystem",
    "Picture",
    "PropagationOptions",
    "Pulse",
    "PulseSchedule",
    "compile_cz",
    "compile_ry",
    "compile_rz",
    "cpb_spectrum",
    "fidelity_loss",
    "gate_matrix",
    "load_device",
    "norm_deficit",
    "oracle_propagate",
    "phase_ledger",
    "propagate",
    "propagate_lossy",
    "validate_device",
]
