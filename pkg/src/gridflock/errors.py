"""Exception hierarchy shared across the package."""


class GridflockError(Exception):
    """Base class for all package errors."""


# linear algebra / gain design
class NotStabilizable(GridflockError):
    pass


class NotPositiveDefinite(GridflockError):
    pass


class NotSymmetric(GridflockError):
    pass


class NoConvergence(GridflockError):
    pass


# graph
class AsymmetricAdjacency(GridflockError):
    pass


# protocol / plant
class NonpositiveAlpha(GridflockError):
    pass


class LengthMismatch(GridflockError):
    pass


# simulation
class FutureQuery(GridflockError):
    pass


class DivergenceError(GridflockError):
    """Raised when a state magnitude exceeds the divergence guard.

    The partially filled trace is attached so callers can still export it.
    """

    def __init__(self, message, trace=None, t=None):
        super().__init__(message)
        self.trace = trace
        self.t = t


# NonfiniteState is the name used in the step contract; keep both spellings.
NonfiniteState = DivergenceError


# configuration
class ConfigError(GridflockError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class GridMisaligned(ValidationError):
    pass


class UnknownPreset(ConfigError):
    pass


# analysis
class UndelayedUnstable(GridflockError):
    pass


class MissingRun(GridflockError):
    pass
