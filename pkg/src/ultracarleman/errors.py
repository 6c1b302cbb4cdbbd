"""Exception types raised across the package."""


class UltraCarlemanError(Exception):
    """Base class for all package errors."""


class ValidationError(UltraCarlemanError, ValueError):
    """Input violates a documented precondition or invariant."""


class DimensionError(ValidationError):
    """Array shapes are inconsistent."""


class SupportError(ValidationError):
    """Field does not vanish where compact support is required."""


class StateError(UltraCarlemanError):
    """Field is in the wrong space (physical vs. frequency) for the operation."""


class SimulationError(UltraCarlemanError, RuntimeError):
    """Time stepping aborted (boundary-mass breach, singular solve)."""


class ConfigError(UltraCarlemanError, ValueError):
    """Configuration text could not be parsed or validated.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(message + where)
