"""Shape derivatives of boundary integral operators, with finite-difference certification."""

__version__ = "0.1.0"

from .errors import (CheckFailed, ConfigError, DeformationTooLarge, DimensionError,  # noqa: E402
                     EvaluationFailed, InsufficientData, OutOfChart, ParameterError,
                     ShapeBIEError, SingularArgument, TooCloseToBoundary)

__all__ = [
    "__version__", "ShapeBIEError", "DimensionError", "DeformationTooLarge", "OutOfChart",
    "SingularArgument", "ParameterError", "TooCloseToBoundary", "EvaluationFailed",
    "InsufficientData", "ConfigError", "CheckFailed",
]
