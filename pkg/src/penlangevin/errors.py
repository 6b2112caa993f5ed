"""Exception types shared across the package."""


class PenLangevinError(Exception):
    """Base class for all package errors."""


class DimensionError(PenLangevinError):
    """Input has the wrong dimension for the object it is used with."""


class NonFiniteError(PenLangevinError):
    """A state or input stopped being finite."""


class NonConvergenceError(PenLangevinError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class UnsupportedTargetError(PenLangevinError):
    """Requested quantity has no implemented route for this target."""


class SimulationError(PenLangevinError):
    """A time-stepping run aborted; carries the failing step index."""

    def __init__(self, message: str, step_index: int | None = None):
        super().__init__(message)
        self.step_index = step_index


class ConfigError(PenLangevinError):
    """Experiment configuration failed validation."""
