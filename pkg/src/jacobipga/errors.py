"""Exception hierarchy shared by all modules."""


class GeometryError(Exception):
    """Base class for numerical failures in this package."""


class InvalidInputError(GeometryError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, bad parameters."""


class ConfigurationError(GeometryError):
    """Unknown manifold names, bad config files, unsupported options."""


class EvaluationError(GeometryError):
    """A user-supplied map returned non-finite values."""


class ConstraintViolationError(GeometryError):
    """A point is off the implicit manifold beyond tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapabilityError(GeometryError):
    """Required derivative data is not available for this manifold."""


class IntegrationError(GeometryError):
    """ODE integration failed; carries the last valid state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class ChartExitError(IntegrationError):
    """A parametric geodesic left the chart domain."""


class NoConvergenceError(GeometryError):
    """Iteration limit reached; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, residual=None, detail=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.detail = detail


class SingularityError(GeometryError):
    """A differential that must be inverted is singular (e.g. conjugate point)."""


class DegenerateError(GeometryError):
    """Degenerate configuration: rank-deficient frame, Hessian or plane."""
