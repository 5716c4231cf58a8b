"""Dynamic perfect plasticity with dissipative boundary conditions.

Small-strain elasto-plastic dynamics discretized by P1 finite elements in
space and an incremental minimization in time, together with the tooling
needed to check the discrete trajectories against energy and entropy
inequalities.
"""

from dynplast.tensor_core import Hooke, SymTensor
from dynplast.convex_sets import Ball, VonMisesCylinder, Polyhedral, BoundaryLaw

__version__ = "0.1.0"

__all__ = [
    "Hooke",
    "SymTensor",
    "Ball",
    "VonMisesCylinder",
    "Polyhedral",
    "BoundaryLaw",
]
