class PcbkitError(Exception):
    """Base class for all errors raised by pcbkit."""


class DimensionError(PcbkitError, ValueError):
    """Tensor or image shapes do not satisfy an operation's contract."""


class ValidationError(PcbkitError, ValueError):
    """An argument, record or configuration value is out of range."""


class NumericError(PcbkitError, ArithmeticError):
    """A computation produced a non-finite value."""
