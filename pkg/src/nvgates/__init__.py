"""Noise-resilient gates on an NV centre and a 13C nuclear register."""

from .system import (
    ControlField, DecouplingField, FieldConfig, Nucleus, SpinRegister, hyperfine_vector,
    internuclear_coupling,
)
from .control import PulseParams, axy8_schedule
from .effective import magic_angle_parameters, nuclear_frame, resonance_frequency
from .propagate import EvolutionPolicy, coherence, evolve, gate_fidelity, realized_gate

__version__ = "0.1.0"
