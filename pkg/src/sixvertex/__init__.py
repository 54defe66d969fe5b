"""Six-vertex model with integrable column inhomogeneities.

Finite-size transfer matrices and Bethe roots, thermodynamic-limit free
energy with closed-form derivatives, commutation-identity verification,
and the height-field Hamiltonian flow with conserved-quantity monitoring.
"""

from . import bethe, commute, flow, kernels, thermo, xfer  # noqa: F401
from .errors import (BranchJumpError, ContinuationError, ConvergenceError,
                     DegenerateRootsError, DomainError, FeasibilityError,
                     RegimeExitError, ResolutionError, SingularityError,
                     SolverError)
from .kernels import ModelParams

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "bethe", "commute", "flow", "kernels", "thermo", "xfer",
    "DomainError", "SingularityError", "BranchJumpError", "FeasibilityError",
    "SolverError", "ConvergenceError", "ContinuationError",
    "DegenerateRootsError", "ResolutionError", "RegimeExitError",
    "__version__",
]
