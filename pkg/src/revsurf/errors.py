"""Exception types shared across the package."""


class RevsurfError(Exception):
    """Base class for all package errors."""


class ValidationError(RevsurfError):
    """Input violates a documented invariant or precondition."""


class ParseError(ValidationError):
    """Config file could not be parsed; message carries the line number."""


class NonPositiveWarping(ValidationError):
    """Warping function hits zero inside the horizon, so the data does not
    define a non-compact model there."""


class InvalidWarping(ValidationError):
    """Warping descriptor fails the boundary conditions or positivity."""


class OdeFailure(RevsurfError):
    """Step control could not meet the requested ODE tolerance."""


class PoleLaunchWithSpin(ValidationError):
    """Geodesics from the pole are meridians; a nonzero launch angle there
    is meaningless."""


class BranchViolation(ValidationError):
    """Monotone-branch integral requested across a turning point."""


class NoConnectionFound(RevsurfError):
    """No connecting geodesic found within the allowed turning budget."""


class DomainViolation(ValidationError):
    """Triangle side lengths violate the embedding domain."""


class PreconditionViolation(ValidationError):
    """Comparison-theorem hypothesis violated."""


class GridMismatch(ValidationError):
    """Per-direction curvature samples do not share a common grid."""


class AuditFailure(RevsurfError):
    """A bound that holds analytically was violated numerically."""
