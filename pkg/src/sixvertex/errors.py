"""Exception taxonomy shared across the library.

DomainError and its subclasses indicate bad inputs (CLI exit code 2);
SolverError and its subclasses indicate a numerical failure (exit code 3).
"""


class DomainError(ValueError):
    """Parameters outside the supported model domain."""


class SingularityError(DomainError):
    """Evaluation requested at (or too close to) a pole or branch point."""


class BranchJumpError(DomainError):
    """A supplied function jumps by more than the branch-tracking threshold."""


class FeasibilityError(DomainError):
    """Boundary or constraint data admit no feasible field configuration."""


class SolverError(RuntimeError):
    """Base class for numerical failures."""


class ConvergenceError(SolverError):
    """An iteration failed to reach the requested tolerance."""


class ContinuationError(ConvergenceError):
    """Parameter continuation failed even after step halving."""


class DegenerateRootsError(SolverError):
    """Two Bethe roots collided within the distinguishability threshold."""


class ResolutionError(SolverError):
    """Discretization too coarse (ill-conditioned Nystrom system)."""


class RegimeExitError(SolverError):
    """A state left the disordered region or tabulated parameter box."""

    def __init__(self, message, partial=None, where=None):
        super().__init__(message)
        self.partial = partial
        self.where = where
