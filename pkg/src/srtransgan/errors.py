"""Exception types shared across the package."""


class SRTransGANError(Exception):
    """Base class for all package errors."""


class DimensionError(SRTransGANError, ValueError):
    """Tensor extents do not satisfy an operation's shape contract."""


class NumericDomainError(SRTransGANError, ArithmeticError):
    """An operation received a value outside its mathematical domain."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} at index {index}")
        self.index = index


class UsageError(SRTransGANError, ValueError):
    """An API was called in a way its contract does not allow."""


class PreconditionError(SRTransGANError, ValueError):
    """Input data violates a documented precondition."""


class DecodeError(SRTransGANError, IOError):
    """An image or checkpoint file could not be decoded."""


class ConfigError(SRTransGANError, ValueError):
    """A configuration document is malformed or contains unknown keys."""


class NonFiniteLossError(SRTransGANError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
