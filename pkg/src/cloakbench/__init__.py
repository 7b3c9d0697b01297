"""Regularized approximate acoustic cloaking with a lossy lining: radial simulator and rate checks."""

from .material import CloakConfig, DerivedParams, cloak_assembly
from .sobolev import ModalDensity, hs_norm, default_probe
from .solver import (
    LayeredSolution,
    ModeTransfer,
    cloak_mode_transfer,
    field_eval,
    solve_cloak,
    solve_free,
    solve_sound_hard_annulus,
)

__all__ = [
    "CloakConfig",
    "DerivedParams",
    "LayeredSolution",
    "ModalDensity",
    "ModeTransfer",
    "cloak_assembly",
    "cloak_mode_transfer",
    "default_probe",
    "field_eval",
    "hs_norm",
    "solve_cloak",
    "solve_free",
    "solve_sound_hard_annulus",
]
__version__ = "0.1.0"
