"""Brayton-Moser circuit models, passivity-based voltage controllers and audited simulation."""

from .controllers import Gains, InputShaping, OutputShaping, OutputShapingAlt, build_controller, controller_preset
from .converters import ConverterParams, converter_setpoint, make_converter
from .core import (
    CircuitState,
    ExtendedState,
    RlcSystem,
    Setpoint,
    SwitchedRlcSystem,
    rlc_dynamics,
    srlc_dynamics,
    verify_assumptions,
)
from .errors import BmsimError
from .network import DcNetworkSpec, Line, build_network, network_setpoint
from .presets import build_preset, preset_names
from .sim import LoadStep, Scenario, Trajectory, audit, integrate, run

__version__ = "0.1.0"

__all__ = [
    "BmsimError",
    "CircuitState",
    "ConverterParams",
    "DcNetworkSpec",
    "ExtendedState",
    "Gains",
    "InputShaping",
    "Line",
    "LoadStep",
    "OutputShaping",
    "OutputShapingAlt",
    "RlcSystem",
    "Scenario",
    "Setpoint",
    "SwitchedRlcSystem",
    "Trajectory",
    "audit",
    "build_controller",
    "build_network",
    "build_preset",
    "controller_preset",
    "converter_setpoint",
    "integrate",
    "make_converter",
    "network_setpoint",
    "preset_names",
    "rlc_dynamics",
    "run",
    "srlc_dynamics",
    "verify_assumptions",
]
