"""Exception hierarchy shared by the simulator modules."""
from __future__ import annotations


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class ParameterError(SimulationError):
    """Model parameters violate one or more admissibility bounds."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DomainError(SimulationError, ValueError):
    """Argument lies outside the domain of a model function."""


class ShapeError(SimulationError, ValueError):
    """Field shape does not match the grid."""


class PositivityError(SimulationError):
    """A field left its admissible sign range.

    ``index`` is the first offending cell as an ``(i, j)`` tuple, when known.
    """

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"{message} at cell {index}"
        super().__init__(message)


class NumericsError(SimulationError):
    """NaN or Inf detected in a field."""


class SolverError(SimulationError):
    """Iterative linear solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class StiffnessError(SimulationError):
    """Stable explicit step fell below the configured minimum."""


class MisuseError(SimulationError):
    """Operation called in a configuration where it is undefined."""


class ConfigError(SimulationError):
    """Configuration document could not be parsed or validated."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class FormatError(SimulationError):
    """Binary snapshot file has an unexpected layout."""
