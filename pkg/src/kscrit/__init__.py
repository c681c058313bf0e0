"""Simulation and verification toolkit for the parabolic-elliptic Keller-Segel
system with critical degenerate diffusion m = 2(N-1)/N on a ball in R^N."""

__version__ = "0.1.0"

from ._backend import NAME as backend
from .core import (
    CellField,
    DiagnosticsRecord,
    ModelParams,
    PotentialField,
    RadialGrid,
    critical_exponent,
    lp_norm,
    make_uniform_grid,
    volume_integral,
)
