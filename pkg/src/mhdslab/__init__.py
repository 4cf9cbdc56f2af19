"""Free-surface viscous resistive MHD in a horizontally periodic slab.

Spectral (Fourier x Chebyshev) discretization in flattened coordinates, an
IMEX time stepper and energy diagnostics.
"""
from .discretization import SpectralPlan
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    GridMismatchError,
    HistoryError,
    IllPosedModeError,
    InconsistentDataError,
    InvalidFieldError,
    MHDSlabError,
    SnapshotError,
    SolverRuntimeError,
)
from .geometry import GeometryState, compute_geometry, validity_guard
from .state import Params, SimState

__version__ = "0.1.0"

__all__ = [
    "SpectralPlan",
    "GeometryState",
    "compute_geometry",
    "validity_guard",
    "Params",
    "SimState",
    "ConfigError",
    "DegenerateGeometryError",
    "GridMismatchError",
    "HistoryError",
    "IllPosedModeError",
    "InconsistentDataError",
    "InvalidFieldError",
    "MHDSlabError",
    "SnapshotError",
    "SolverRuntimeError",
]
