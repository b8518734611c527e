"""Exception types shared across the package."""


class MicrostructError(Exception):
    """Base class for package errors."""


class DegenerateHull(MicrostructError):
    """Input points are coplanar/collinear and no flat hull was requested."""


class UnsupportedBoolean(MicrostructError):
    """A boolean region combination outside the supported catalogue."""


class NonDifferentiable(MicrostructError):
    """Divergence requested for a field without usable derivatives."""


class ParamDomain(MicrostructError):
    """Cell or plan parameters outside the family's admissible domain."""


class PdeNotConverged(MicrostructError):
    """Iterative solver failed to reach the requested residual."""


class IncompatibleLoad(MicrostructError):
    """Discrete net force/torque of a pure-traction load exceeds tolerance."""


class DomainTooNarrow(MicrostructError):
    """Base width ell is too small to host the coarsest cell layer."""


class RegimeViolation(MicrostructError):
    """Parameters violate the validity conditions of the requested regime."""


class StackingMismatch(MicrostructError):
    """Adjacent layers fail the trace-compatibility check."""


class OutOfTheorem(MicrostructError):
    """(eps, F) outside the scaling-law parameter range."""


class NotLipschitz(MicrostructError):
    """Dual witness violates the Lipschitz-1 constraint."""


class TooFewPoints(MicrostructError):
    """Not enough data rows for a least-squares fit."""


class QuadratureFailed(MicrostructError):
    """Numerical integration did not reach the requested tolerance."""
