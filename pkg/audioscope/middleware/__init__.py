"""
Middleware: exception-to-exit-code mapping for the command line
"""

from .error_handlers import (
    audioscope_exception_handler,
    generic_exception_handler,
    handle_errors,
    validation_exception_handler,
)

__all__ = [
    "audioscope_exception_handler",
    "generic_exception_handler",
    "handle_errors",
    "validation_exception_handler",
]
