"""Exception hierarchy shared across the package."""


class MetastatesError(Exception):
    """Base class for all package errors."""


class NotStochastic(MetastatesError):
    """A transition matrix row does not sum to one (or has bad entries)."""


class NotErgodic(MetastatesError):
    """No matrix power up to the Wielandt bound is entrywise positive."""


class SolverFailure(MetastatesError):
    """A linear solve or eigendecomposition failed beyond tolerance."""


class NonConvergence(MetastatesError):
    """An iterative scheme exceeded its iteration cap."""


class EigenFailure(MetastatesError):
    """Eigenvalue computation did not converge."""


class SupportViolation(MetastatesError):
    """Relative entropy of p w.r.t. q where p charges a null atom of q."""


class BoundaryPoint(MetastatesError):
    """A profile is too close to a simplex face for finite differences."""


class EmptyResult(MetastatesError):
    """No fixed-point start converged."""


class VolumeTooLarge(MetastatesError):
    """Requested exact computation exceeds the feasibility cap."""


class ZeroMass(MetastatesError):
    """A conditioning event has numerically vanishing probability."""


class DegenerateAll(MetastatesError):
    """Every Gaussian sample was left unclassified at the given margin."""


class NoBracket(MetastatesError):
    """The search window does not bracket a sign change."""


class NoOrderedPhase(MetastatesError):
    """Only the symmetric solution exists; no ordered branch to work with."""


class ConfigError(MetastatesError):
    """Invalid command-line or file configuration (CLI exit code 2)."""


class ComputeError(MetastatesError):
    """A computation dispatched by the CLI failed (CLI exit code 1)."""
