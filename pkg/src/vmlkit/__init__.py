"""Two-species Vlasov-Maxwell-Landau perturbation toolkit.

Deterministic desk-scale simulator and verification suite for the
perturbation system about the global Maxwellian: truncated phase-space
discretization, the soft-potential Landau collision operator with exact
structural properties, macro-micro decomposition, spectral Maxwell fields,
Strang-split time integration, and the weighted energy/dissipation
functional family with decay-rate and Lyapunov monitors.
"""

from . import diagnostics, evolve, landau, macro_micro, maxwell, phase_grid
from .evolve import PhaseState, RunConfig, run
from .landau import (
    CollisionTables,
    apply_Gamma,
    apply_L,
    apply_Q,
    build_collision_tables,
)
from .macro_micro import MacroProjector
from .maxwell import EMField
from .phase_grid import SpatialGrid, VelocityGrid, WeightParams

__version__ = "0.1.0"

__all__ = [
    "CollisionTables",
    "EMField",
    "MacroProjector",
    "PhaseState",
    "RunConfig",
    "SpatialGrid",
    "VelocityGrid",
    "WeightParams",
    "apply_Gamma",
    "apply_L",
    "apply_Q",
    "build_collision_tables",
    "diagnostics",
    "evolve",
    "landau",
    "macro_micro",
    "maxwell",
    "phase_grid",
    "run",
]
