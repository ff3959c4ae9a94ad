"""Exception types shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class DimensionError(SimError, ValueError):
    """Interest profiles with mismatched dimensionality."""


class ConfigurationError(SimError, ValueError):
    """Invalid model, protocol, or experiment parameters."""


class SamplingError(SimError, RuntimeError):
    """Rejection sampling exhausted its retry budget."""


class ProtocolViolationError(SimError, RuntimeError):
    """A contact was applied that the protocol state machine forbids."""


class DataError(SimError, ValueError):
    """Semantically invalid input data (traces, profiles, attribute tables)."""


class TraceParseError(DataError):
    """Malformed trace or profile text."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class UndefinedCorrelationError(DataError):
    """Correlation requested on a series with zero variance."""
