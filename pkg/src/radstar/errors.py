"""Exception hierarchy shared by all radstar modules."""


class RadStarError(Exception):
    """Base class for every error raised by radstar."""

    exit_code = 3


class DomainError(RadStarError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 1


class RegimeError(RadStarError):
    """No regular steady state exists for the requested epsilon*K."""

    exit_code = 2


class NoFirstZero(RadStarError):
    """The Lane-Emden solution stayed positive up to the search radius."""

    exit_code = 2


class StepFailure(RadStarError):
    """The ODE integrator produced a non-finite value."""


class RangeError(RadStarError, ValueError):
    exit_code = 1


class UnsupportedIndex(RadStarError, ValueError):
    exit_code = 1


class InsufficientResolution(RadStarError):
    pass


class ShapeMismatch(RadStarError, ValueError):
    exit_code = 1


class LifetimeExceeded(RadStarError):
    """Requested time lies beyond the collapse time a/|b|."""

    exit_code = 1


class InversionError(RadStarError):
    """A Lagrangian cell has collapsed (r_x <= 0)."""


class SolverDiverged(RadStarError):
    """A linear implicit solve did not meet its residual tolerance."""


class NegativeTemperature(RadStarError):
    pass


class ConfigError(RadStarError):
    """Malformed configuration file."""

    exit_code = 1
