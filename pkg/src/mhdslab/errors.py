"""Exception types raised by the solver and its diagnostics."""


class MHDSlabError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(MHDSlabError, ValueError):
    """A field contains non-finite values or has the wrong shape."""


class GridMismatchError(MHDSlabError, ValueError):
    """A field does not live on the grid described by the plan."""


class DegenerateGeometryError(MHDSlabError):
    """The flattening map is not a diffeomorphism (J <= 0 somewhere)."""


class IllPosedModeError(MHDSlabError):
    """A per-mode linear system could not be solved."""


class InconsistentDataError(MHDSlabError, ValueError):
    """Boundary-value data violate a solvability condition."""


class HistoryError(MHDSlabError, ValueError):
    """Not enough stored states to form the requested time derivatives."""


class SolverRuntimeError(MHDSlabError, RuntimeError):
    """A time step failed; carries the index of the failing step."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class ConfigError(MHDSlabError, ValueError):
    """A configuration file could not be parsed or validated."""


class SnapshotError(MHDSlabError, ValueError):
    """A snapshot file is corrupt or incompatible."""
