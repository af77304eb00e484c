"""Exception types raised by the solvers."""
from __future__ import annotations


class CQLimitError(Exception):
    """Base class for all package errors."""


class GridError(CQLimitError, ValueError):
    pass


class KernelError(CQLimitError, ValueError):
    pass


class NodeDetected(CQLimitError):
    """The wave function vanishes inside its support; the phase is undefined."""


class WindingDetected(CQLimitError):
    """The phase winds around a periodic axis and cannot be unwrapped globally."""


class CausticFormed(CQLimitError):
    """The Lagrangian map lost monotonicity before the requested time."""


class AmplitudeFloorBreached(CQLimitError):
    """An amplitude fell below the configured floor where a quotient by it is needed."""


class BlowUp(CQLimitError):
    """Non-finite or runaway values appeared during time stepping."""


class FlowEscape(CQLimitError):
    """A classical trajectory left the box by more than half a box width."""


class ValidationError(CQLimitError, ValueError):
    """Configuration or argument validation failed; ``errors`` lists every problem."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ExpressionError(CQLimitError, ValueError):
    """A potential expression could not be parsed; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)
