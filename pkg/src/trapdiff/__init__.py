"""Particle diffusion with trapping boundary layers.

A resolved drift-diffusion model with a short-range trapping potential at the
wall, the reduced model that replaces the thin layer by a dynamic boundary
condition with trapping coefficient M, and a validation harness that
quantifies the agreement between the two as the layer width shrinks.
"""

from .errors import (ConfigurationError, NumericsError,
                     SaturationOverflowError, StencilDegradationError,
                     TrapdiffError)
from .potential import (PotentialSpec, saturated_M, solve_phi_for_M,
                        trap_capacity_I, trap_coefficient_M)
from .geometry import CartesianGrid2D, CircleLevelSet, Interval1D
from .solver_full import (FullConfig, FullSolver1D, FullSolver2D, GaussianIC,
                          SlabGrid2D)
from .solver_multiscale import (CapacityLaw, MultiscaleConfig,
                                MultiscaleSolver1D, MultiscaleSolver2D)
from .validation import (DofEstimate, ErrorReport, compare_models_1d,
                         dof_estimate, steady_state_oracle)

__version__ = "0.1.0"

__all__ = [
    "TrapdiffError", "ConfigurationError", "NumericsError",
    "SaturationOverflowError", "StencilDegradationError",
    "PotentialSpec", "trap_capacity_I", "trap_coefficient_M",
    "solve_phi_for_M", "saturated_M",
    "Interval1D", "CartesianGrid2D", "CircleLevelSet",
    "GaussianIC", "SlabGrid2D", "FullConfig", "FullSolver1D", "FullSolver2D",
    "CapacityLaw", "MultiscaleConfig", "MultiscaleSolver1D",
    "MultiscaleSolver2D",
    "ErrorReport", "DofEstimate", "compare_models_1d", "steady_state_oracle",
    "dof_estimate",
]
