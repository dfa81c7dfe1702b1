"""
Global Exception Handlers for the command line
Maps every failure to an exit code and one structured JSON line on stderr
"""

import json
import logging
import sys
from datetime import datetime
from typing import Any, Callable, Dict, TextIO

from pydantic import ValidationError

from audioscope.exceptions import EXIT_RUNTIME_ERROR, EXIT_VALIDATION_ERROR, AudioScopeException

logger = logging.getLogger(__name__)


def _emit(payload: Dict[str, Any], stream: TextIO) -> None:
    payload["timestamp"] = datetime.utcnow().isoformat()
    stream.write(json.dumps(payload, default=str) + "\n")
    stream.flush()


def audioscope_exception_handler(command: str, exc: AudioScopeException, stream: TextIO) -> int:
    """
    Handle all custom AudioScope exceptions
    Reports the structured error and returns its exit code
    """
    logger.error(
        f"AudioScopeException: {exc.error_code} - {exc.message}",
        extra={"error_code": exc.error_code, "exit_code": exc.exit_code, "details": exc.details, "command": command},
    )
    payload = exc.to_dict()
    payload["command"] = command
    _emit(payload, stream)
    return exc.exit_code


def validation_exception_handler(command: str, exc: ValidationError, stream: TextIO) -> int:
    """
    Handle pydantic validation errors
    Lists every rejected field with its message
    """
    errors = []
    for error in exc.errors():
        field_path = " -> ".join(str(loc) for loc in error.get("loc", []))
        errors.append({
            "field": field_path,
            "message": error.get("msg", "Validation error"),
            "type": error.get("type", "value_error"),
        })
    logger.warning(f"Validation error in {command}", extra={"errors": errors, "command": command})
    _emit({
        "error": True,
        "error_code": "VALIDATION_ERROR",
        "message": "Configuration validation failed",
        "exit_code": EXIT_VALIDATION_ERROR,
        "details": {"validation_errors": errors},
        "command": command,
    }, stream)
    return EXIT_VALIDATION_ERROR


def generic_exception_handler(command: str, exc: Exception, stream: TextIO) -> int:
    """
    Handle all uncaught exceptions
    Logs the full traceback and reports a runtime failure
    """
    logger.exception(
        f"Unhandled exception: {type(exc).__name__}",
        extra={"error_type": type(exc).__name__, "error_message": str(exc), "command": command},
    )
    _emit({
        "error": True,
        "error_code": "RUNTIME_ERROR",
        "message": str(exc) or type(exc).__name__,
        "exit_code": EXIT_RUNTIME_ERROR,
        "details": {"error_type": type(exc).__name__},
        "command": command,
    }, stream)
    return EXIT_RUNTIME_ERROR


def handle_errors(command: str, body: Callable[[], int], stream: TextIO = None) -> int:
    """Run `body` and turn whatever it raises into an exit code"""
    stream = stream or sys.stderr
    try:
        return body()
    except AudioScopeException as e:
        return audioscope_exception_handler(command, e, stream)
    except ValidationError as e:
        return validation_exception_handler(command, e, stream)
    except KeyboardInterrupt:
        logger.warning(f"{command} interrupted")
        return EXIT_RUNTIME_ERROR
    except Exception as e:
        return generic_exception_handler(command, e, stream)
