"""Exceptions raised by hypermeso"""


class HypermesoError(Exception):
    """Base class for all hypermeso errors"""


class ParseError(HypermesoError, ValueError):
    """Malformed hyperedge input"""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(HypermesoError, ValueError):
    """Invalid dimensions, options or configuration"""


class NumericError(HypermesoError, ArithmeticError):
    """Non-finite values or a failed optimisation"""


class CheckpointError(HypermesoError, ValueError):
    """Checkpoint file does not match the expected schema"""
