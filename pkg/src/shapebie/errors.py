"""Exception hierarchy shared by all modules."""


class ShapeBIEError(Exception):
    pass


class DimensionError(ShapeBIEError):
    pass


class DeformationTooLarge(ShapeBIEError):
    pass


class OutOfChart(ShapeBIEError):
    pass


class SingularArgument(ShapeBIEError):
    pass


class ParameterError(ShapeBIEError):
    pass


class TooCloseToBoundary(ShapeBIEError):
    pass


class EvaluationFailed(ShapeBIEError):
    """Raised when a family member cannot be evaluated at some step size."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientData(ShapeBIEError):
    pass


class ConfigError(ShapeBIEError):
    exit_code = 2


class CheckFailed(ShapeBIEError):
    exit_code = 1
