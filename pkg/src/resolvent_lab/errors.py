"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConvergenceError(LabError):
    """An iterative or adaptive procedure did not reach its tolerance.

    ``achieved`` carries the best error estimate obtained.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class CalibrationError(LabError):
    """A normalising constant disagrees with its independent oracle."""


class SingularError(LabError):
    """The spectral parameter is (numerically) on the spectrum."""


class ResolutionError(LabError):
    """A grid is too coarse for the requested oscillation; ``required_N`` says what would do."""

    def __init__(self, message, required_N=None):
        super().__init__(message)
        self.required_N = required_N


class BoundaryError(LabError):
    """A stencil or geodesic left the coordinate chart."""


class NumericalError(LabError):
    """Non-finite values appeared during a computation."""


class ConfigError(LabError):
    """Malformed or inconsistent experiment configuration."""
