"""Exception types raised across the package."""


class ZxError(Exception):
    """Base class for all package errors."""


class ConfigError(ZxError, ValueError):
    """Invalid or inconsistent configuration value."""


class DimensionError(ZxError, ValueError):
    """Operand shapes do not agree."""


class InvalidSymbolError(ZxError, ValueError):
    """Symbol id outside 1..R or malformed symbol string."""


class BitLengthError(ZxError, ValueError):
    """Bit string length incompatible with the Gray code in use."""


class RankDeficientError(ZxError, ValueError):
    """Channel matrix is not full row rank."""


class NonPsdError(ZxError, ValueError):
    """Covariance matrix is not positive semidefinite."""


class QpError(ZxError):
    """Numerical failure inside the QP solver."""


class InfeasibleError(QpError):
    """The QP constraint set is empty (Farkas certificate found)."""


class TargetUnreachableError(ZxError):
    """Requested SER target cannot be met on the search interval."""
