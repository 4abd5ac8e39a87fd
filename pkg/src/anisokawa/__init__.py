"""Anisotropic Kawasaki lattice gas: exact landscape analysis and nucleation
asymptotics for the strongly anisotropic regime."""

from .params import ModelParams, make_params, preset, classify_regime, load_params_file
from .model import Configuration, enumerate_bonds, apply_move, energy_pairwise, \
    transition_probability
from .geometry import decompose, frame, energy_geometric

__all__ = [
    "ModelParams", "make_params", "preset", "classify_regime", "load_params_file",
    "Configuration", "enumerate_bonds", "apply_move", "energy_pairwise",
    "transition_probability", "decompose", "frame", "energy_geometric",
]

__version__ = "0.1.0"
