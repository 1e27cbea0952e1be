"""Exception hierarchy shared across the package."""


class TracksimError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(TracksimError, ValueError):
    pass


class NumericError(TracksimError, ArithmeticError):
    """A numerical routine failed to converge or produced an unusable result."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class QuadratureError(NumericError):
    pass


class BoundaryError(NumericError):
    """Wavefunction mass reached the edge of the periodic grid."""


class SingularDesignError(NumericError):
    """Normal-equations matrix of a least-squares fit is numerically singular."""


class ConfigError(TracksimError):
    """Raised for malformed or inconsistent experiment configuration."""

    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


class UnsupportedBackendError(TracksimError):
    pass
