"""Exception types shared across the package."""


class EvreconError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EvreconError):
    """Malformed input data (carries a line number when known)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class OrderingError(ParseError):
    """Event timestamps decreased within a stream."""


class ConfigError(EvreconError):
    """Invalid configuration value (non-positive window, bad channel count, ...)."""


class ShapeError(EvreconError):
    """Operands with incompatible shapes."""


class ContractError(EvreconError):
    """An operation was called outside its contract (non-scalar loss, non-binary spikes, ...)."""


class DivergenceError(EvreconError):
    """Training produced NaN/inf loss."""
