"""
Custom Exception Classes for the AudioScope pipeline
Hierarchical exception structure mapping failures to CLI exit codes
"""

from typing import Any, Dict, Optional

EXIT_VALIDATION_ERROR = 1
EXIT_RUNTIME_ERROR = 2


class AudioScopeException(Exception):
    """Base exception class for all AudioScope errors"""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_RUNTIME_ERROR,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.exit_code = exit_code
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for the structured stderr report"""
        return {
            "error": True,
            "error_code": self.error_code,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details,
        }


# ==================== Validation Exceptions ====================

class ValidationException(AudioScopeException):
    """Input validation errors"""

    def __init__(self, message: str, field: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        validation_details = details or {}
        if field:
            validation_details["field"] = field

        super().__init__(
            message=message,
            exit_code=EXIT_VALIDATION_ERROR,
            error_code="VALIDATION_ERROR",
            details=validation_details,
        )


class ConfigException(AudioScopeException):
    """Invalid or inconsistent configuration"""

    def __init__(self, message: str, key: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        config_details = details or {}
        if key:
            config_details["key"] = key

        super().__init__(
            message=message,
            exit_code=EXIT_VALIDATION_ERROR,
            error_code="CONFIG_ERROR",
            details=config_details,
        )


class ContractException(AudioScopeException):
    """An operation was called outside its precondition"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_VALIDATION_ERROR,
            error_code="CONTRACT_ERROR",
            details=details,
        )


class DimensionException(AudioScopeException):
    """Axis or shape mismatch between tensors"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_VALIDATION_ERROR,
            error_code="DIMENSION_ERROR",
            details=details,
        )


# ==================== Numerical Exceptions ====================

class NumericException(AudioScopeException):
    """Non-finite values produced by a computation"""

    def __init__(self, message: str, step: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        numeric_details = details or {}
        if step is not None:
            numeric_details["step"] = step

        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="NUMERIC_ERROR",
            details=numeric_details,
        )


class NoActiveSourceException(AudioScopeException):
    """Active-combinations loss requested with an all-zero label vector"""

    def __init__(self, message: str = "no-active-source", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="NO_ACTIVE_SOURCE",
            details=details,
        )


class DegenerateLabelsException(AudioScopeException):
    """AUC requested on a single-class label set"""

    def __init__(self, message: str = "degenerate-labels", details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="DEGENERATE_LABELS",
            details=details,
        )


class GradientCheckException(AudioScopeException):
    """Analytic gradients disagree with finite differences"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="GRADIENT_CHECK_FAILED",
            details=details,
        )


# ==================== Storage Exceptions ====================

class CheckpointException(AudioScopeException):
    """Checkpoint read/write errors"""

    def __init__(self, message: str, path: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        checkpoint_details = details or {}
        if path:
            checkpoint_details["path"] = path

        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="CHECKPOINT_ERROR",
            details=checkpoint_details,
        )


class DatasetException(AudioScopeException):
    """Dataset layout or content errors"""

    def __init__(self, message: str, path: Optional[str] = None, details: Optional[Dict[str, Any]] = None):
        dataset_details = details or {}
        if path:
            dataset_details["path"] = path

        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="DATASET_ERROR",
            details=dataset_details,
        )


# ==================== Workflow Exceptions ====================

class TrainingException(AudioScopeException):
    """Training aborted"""

    def __init__(self, message: str, step: Optional[int] = None, details: Optional[Dict[str, Any]] = None):
        training_details = details or {}
        if step is not None:
            training_details["step"] = step

        super().__init__(
            message=message,
            exit_code=EXIT_RUNTIME_ERROR,
            error_code="TRAINING_ERROR",
            details=training_details,
        )
