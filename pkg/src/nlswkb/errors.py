"""Exception types shared across the package."""


class NlswkbError(Exception):
    """Base class for package errors."""


class GridError(NlswkbError):
    """Invalid grid construction."""


class FieldError(NlswkbError):
    """Invalid field data (shape mismatch, non-finite samples)."""


class CausticError(NlswkbError):
    """Operation requested at or past the caustic horizon."""


class InversionError(NlswkbError):
    """Ray-map inversion failed to converge or left the marker chart."""

    def __init__(self, message: str, worst_residual: float | None = None):
        super().__init__(message)
        self.worst_residual = worst_residual


class ResolutionError(NlswkbError):
    """Spectral tail grew beyond the trusted fraction of the band."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class DivergenceError(NlswkbError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class ConfigError(NlswkbError):
    """Invalid experiment configuration."""
