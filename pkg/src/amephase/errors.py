"""Exception types raised across the package."""


class AmePhaseError(Exception):
    """Base class for all package errors."""


class DivisionByZero(AmePhaseError, ZeroDivisionError):
    pass


class MixedFieldError(AmePhaseError, TypeError):
    pass


class WrongFieldKindError(AmePhaseError, ValueError):
    pass


class InvalidFieldError(AmePhaseError, ValueError):
    pass


class DimensionMismatchError(AmePhaseError, ValueError):
    pass


class NonDistinctPrimesError(AmePhaseError, ValueError):
    pass


class OutOfRangeError(AmePhaseError, ValueError):
    pass


class CompositeFieldRankError(AmePhaseError, ValueError):
    """Rank was requested over Z_d; split into prime components first."""


class InvalidPhaseMatrixError(AmePhaseError, ValueError):
    pass


class InvalidMaxSizeError(AmePhaseError, ValueError):
    pass


class InvalidBipartitionError(AmePhaseError, ValueError):
    pass


class StaleCacheError(AmePhaseError, RuntimeError):
    pass


class InvalidConfigError(AmePhaseError, ValueError):
    pass


class NotCompositeError(AmePhaseError, ValueError):
    pass


class MixedDimensionsError(AmePhaseError, ValueError):
    pass


class DuplicatePrimesError(AmePhaseError, ValueError):
    pass


class InstanceTooLargeError(AmePhaseError, ValueError):
    def __init__(self, message, required=None, cap=None):
        super().__init__(message)
        self.required = required
        self.cap = cap


class DualityViolationError(AmePhaseError, AssertionError):
    pass


class MatrixFormatError(AmePhaseError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
