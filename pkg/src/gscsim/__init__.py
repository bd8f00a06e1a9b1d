"""Phasor-domain workbench for generalized swing control of inverter-based resources."""
from ._accel import backend
from .caseio import load_bundled, parse_case, with_params
from .gsc import ComplexFrequency, GscParams, GscState, gsc_rhs, make_preset
from .netmodel import NetworkCase, apply_load_step, build_ybus, solve_powerflow
from .tds import SimOptions, Trajectory, find_equilibrium, initialize, simulate

__version__ = "0.1.0"

__all__ = [
    "backend", "load_bundled", "parse_case", "with_params", "ComplexFrequency", "GscParams",
    "GscState", "gsc_rhs", "make_preset", "NetworkCase", "apply_load_step", "build_ybus",
    "solve_powerflow", "SimOptions", "Trajectory", "find_equilibrium", "initialize", "simulate",
]
