"""
Custom Exception Classes for the AudioScope pipeline
Provides standardized error handling across the package
"""

from .custom_exceptions import (
    EXIT_RUNTIME_ERROR,
    EXIT_VALIDATION_ERROR,
    AudioScopeException,
    CheckpointException,
    ConfigException,
    ContractException,
    DatasetException,
    DegenerateLabelsException,
    DimensionException,
    GradientCheckException,
    NoActiveSourceException,
    NumericException,
    TrainingException,
    ValidationException,
)

__all__ = [
    "EXIT_RUNTIME_ERROR",
    "EXIT_VALIDATION_ERROR",
    "AudioScopeException",
    "CheckpointException",
    "ConfigException",
    "ContractException",
    "DatasetException",
    "DegenerateLabelsException",
    "DimensionException",
    "GradientCheckException",
    "NoActiveSourceException",
    "NumericException",
    "TrainingException",
    "ValidationException",
]
