"""Exception types raised across the package."""


class GOrientError(Exception):
    """Base class for all package errors."""


class NotSignPaired(GOrientError):
    pass


class NoFZRepresentative(GOrientError):
    pass


class DegenerateResultant(GOrientError):
    """Mean resultant length reached 1 (all samples identical).

    ``mu`` carries the mean direction, which is still well defined.
    """

    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


class DegenerateScatter(GOrientError):
    pass


class NonFiniteLikelihood(GOrientError):
    pass


class EmptyCluster(GOrientError):
    pass


class ParseError(GOrientError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NormError(GOrientError):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)
