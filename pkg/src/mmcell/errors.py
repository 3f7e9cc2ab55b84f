"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, SolverError -> 3,
ResolutionError -> 4.
"""


class MmcellError(Exception):
    """Base class for package errors."""


class ConfigError(MmcellError):
    """Malformed or invariant-violating configuration; carries the field path."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class GeometryError(MmcellError):
    """Geometry that cannot be processed (e.g. no exterior voxels)."""


class ResolutionError(MmcellError):
    """Grid too coarse to resolve a requested feature (empty wire cross-section)."""


class SolverError(MmcellError):
    """Iterative solver failed; carries the last residual and iteration count."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IncompatibleRhsError(SolverError):
    """CG met a zero-curvature direction with the residual still above tolerance."""


class PoleProximityError(MmcellError):
    """Lossless frequency parameter within the pole guard of an eigenvalue."""


class CirculationError(MmcellError):
    """Circulation loops disagree beyond tolerance or no admissible loop exists."""
