"""Exception types raised across the package."""


class InflapError(Exception):
    """Base class for all package errors."""


class DegenerateSpec(InflapError, ValueError):
    pass


class FeatureTooFine(InflapError, ValueError):
    """The cell size cannot resolve the domain."""


class NotInterior(InflapError, ValueError):
    pass


class ZeroField(InflapError, ValueError):
    pass


class MaxItersExceeded(InflapError):
    """Raised on request when a solve hits its iteration cap.

    ``pair`` holds the best iterate found (flagged as not converged).
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class DegenerateMeasure(InflapError, ValueError):
    pass


class InfeasibleMarginals(InflapError, ValueError):
    pass


class NonConvergence(InflapError):
    pass


class EmptyRaySet(InflapError, ValueError):
    pass


class InsufficientRows(InflapError, ValueError):
    pass


class ConfigError(InflapError, ValueError):
    pass
