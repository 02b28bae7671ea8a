"""Exception hierarchy shared by all harnacklab modules."""


class HarnackLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HarnackLabError):
    """A point or stencil left the valid region of a chart."""


class DegeneracyError(HarnackLabError):
    """A metric sample was not symmetric positive definite."""


class ParameterError(HarnackLabError, ValueError):
    """An argument violated an operation's precondition."""


class ShapeError(HarnackLabError, ValueError):
    """Array shapes do not match the grid they are meant for."""


class StabilityError(ParameterError):
    """The requested time step violates the scheme's stability criterion."""


class PositivityError(HarnackLabError):
    """A heat solve produced a non-positive value.

    ``node`` and ``time`` locate the first offending value.
    """

    def __init__(self, message, node=None, time=None):
        super().__init__(message)
        self.node = node
        self.time = time


class TruncationError(HarnackLabError):
    """Boundary flux on a truncated line exceeded the monitor tolerance."""


class CertificateError(HarnackLabError):
    """A check was refused because its curvature certificate is missing or failed."""


class ConfigError(HarnackLabError):
    """A scenario configuration could not be parsed or validated."""
