"""Exception hierarchy shared across the package."""


class CaptoolError(Exception):
    """Base class for all captool errors."""


class ShapeError(CaptoolError):
    """Operator dimensions are inconsistent."""


class DomainError(CaptoolError):
    """A numeric argument lies outside its mathematical domain."""


class NumericalFailure(CaptoolError):
    """A numerical routine (eigensolver) failed to converge."""


class SupportError(CaptoolError):
    """Relative entropy requested with support(rho) not inside support(sigma)."""


class ConfigError(CaptoolError):
    """Invalid protocol, channel, optimizer or CLI configuration."""


class InconsistentObservations(CaptoolError):
    """Observed statistics contradict each other under POVM completeness."""


class ConstraintInfeasible(CaptoolError):
    """No quantum state reproduces the requested expectation values."""


class DegenerateStatistics(CaptoolError):
    """A QBER denominator (matched-basis probability) is numerically zero."""


class NoBoundary(CaptoolError):
    """Zero-capacity boundary search has no sign change on [0, 1/2]."""
