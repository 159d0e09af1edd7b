"""Exception types raised by idprisk."""


class IdpError(Exception):
    """Base class for all idprisk errors."""


class DomainError(IdpError, ValueError):
    """An argument lies outside the domain of the operation."""


class PrecisionError(IdpError):
    """The numerical configuration cannot certify the requested accuracy.

    ``floor`` carries the smallest delta the configuration can certify.
    """

    def __init__(self, message: str, floor: float | None = None):
        super().__init__(message)
        self.floor = floor


class CalibrationError(IdpError):
    """A parameter search could not meet its target.

    ``edge`` is the bracket edge that was hit and ``trace`` any diagnostic
    history collected along the way.
    """

    def __init__(self, message: str, edge: float | None = None, trace=None):
        super().__init__(message)
        self.edge = edge
        self.trace = trace if trace is not None else []
