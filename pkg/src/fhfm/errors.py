"""Exception hierarchy shared by every module in the package."""


class FhfmError(Exception):
    """Base class for all package errors."""


class ValidationError(FhfmError, ValueError):
    """Input object violates a structural invariant."""


class InvalidLagError(ValidationError):
    pass


class InsufficientLengthError(ValidationError):
    pass


class RankError(ValidationError):
    pass


class NumericError(FhfmError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConvergenceError(FhfmError, RuntimeError):
    pass


class DegenerateSpectrumError(FhfmError, ArithmeticError):
    """Leading eigenvalue is zero: the matrix carries no signal."""


class SelectionError(FhfmError, RuntimeError):
    """No candidate model in a search grid could be fitted."""


class ForecastError(FhfmError, RuntimeError):
    def __init__(self, message, factor_index=None):
        super().__init__(message)
        self.factor_index = factor_index


class CoverageError(FhfmError, LookupError):
    """Mortality surface does not cover the requested (age, year) cells."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class ParseError(FhfmError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class PreprocessingError(FhfmError, ValueError):
    pass


class ConfigError(FhfmError, ValueError):
    pass
