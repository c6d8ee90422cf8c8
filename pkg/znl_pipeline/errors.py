"""
Error hierarchy for the zero-noise-limit pipeline.

Every error carries the CLI exit code it maps to:
- 1: usage / configuration problems
- 2: data problems (bad input, degenerate data, broken chain structure)
- 3: numeric problems (integration blow-up, non-convergence, singular solves)
"""

from typing import Any, Optional, Sequence


class ZnlError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = 1


class ConfigError(ZnlError):
    """Invalid configuration or command-line usage."""

    exit_code = 1


class DataError(ZnlError):
    """Input data cannot support the requested operation."""

    exit_code = 2


class ArgumentError(DataError, ValueError):
    """An argument violates an operation's precondition."""


class DegenerateDataError(DataError):
    """Data is too degenerate to estimate a quantity (e.g. all points identical)."""


class EstimationError(DataError):
    """A data-driven estimate has no admissible samples."""


class SeriesFormatError(DataError):
    """A series or run file could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class StructureError(DataError):
    """The transition graph lacks the structure an operation needs."""

    def __init__(self, message: str, components: Optional[Sequence[Sequence[int]]] = None):
        self.components = [list(c) for c in components] if components is not None else []
        if self.components:
            sizes = sorted((len(c) for c in self.components), reverse=True)
            message = f"{message} ({len(self.components)} components, sizes {sizes[:10]})"
        super().__init__(message)


class NumericError(ZnlError):
    """A numerical procedure failed."""

    exit_code = 3


class IntegrationError(NumericError):
    """The vector field produced a non-finite value."""

    def __init__(self, message: str, state: Any = None):
        super().__init__(message)
        self.state = state


class BlowUpError(IntegrationError):
    """A trajectory left the divergence guard box."""


class ConvergenceError(NumericError):
    """An iteration did not reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class RankDeficiencyError(NumericError):
    """A normal-equation matrix is singular."""


class ZeroDegreeError(NumericError):
    """A kernel row sums to zero."""


class OutOfDomainError(NumericError):
    """A query point is too far from an edge's training cloud for any kernel weight to survive."""

    def __init__(
        self,
        message: str,
        edge: Optional[tuple[int, int]] = None,
        point: Any = None,
        step: Optional[int] = None,
    ):
        super().__init__(message)
        self.edge = edge
        self.point = point
        self.step = step


class StageError(ZnlError):
    """A pipeline stage failed; wraps the underlying error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
