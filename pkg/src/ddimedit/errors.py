"""Exception types raised across the engine."""


class DdimEditError(Exception):
    """Base class for all engine errors."""


class InvalidParameterError(DdimEditError, ValueError):
    pass


class DimensionMismatchError(DdimEditError, ValueError):
    pass


class InvalidTimestepError(DdimEditError, ValueError):
    pass


class InvalidConditionError(DdimEditError, ValueError):
    pass


class StochasticScheduleError(DdimEditError, ValueError):
    """Raised when an operation requires eta == 0."""


class MissingNoiseError(DdimEditError, ValueError):
    pass


class MissingOracleError(DdimEditError, ValueError):
    pass


class PlanMismatchError(DdimEditError, ValueError):
    pass


class NumericDegeneracyError(DdimEditError, ArithmeticError):
    """Raised when a computation would divide by zero or produce non-finite values."""


class ConfigError(DdimEditError, ValueError):
    """Invalid or unreadable configuration. ``key`` names the offending entry, if any."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
