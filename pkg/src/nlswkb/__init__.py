"""Semiclassical cubic NLS toolkit: geometric-optics approximations in the
sub-critical, critical and super-critical scaling regimes, validated
against a split-step spectral reference solver.
"""

from .errors import (CausticError, ConfigError, DivergenceError, FieldError,
                     GridError, InversionError, NlswkbError, ResolutionError)
from .fields import (ComplexField, RealField, l2_linf_norm, lp_norm,
                     sobolev_norm)
from .grids import PeriodicGrid
from .potentials import InitialPhaseSpec, PotentialSpec
from .problem import SemiclassicalProblem, gaussian_field

__version__ = "0.1.0"

__all__ = [
    "CausticError", "ComplexField", "ConfigError", "DivergenceError",
    "FieldError", "GridError", "InitialPhaseSpec", "InversionError",
    "NlswkbError", "PeriodicGrid", "PotentialSpec", "RealField",
    "ResolutionError", "SemiclassicalProblem", "gaussian_field",
    "l2_linf_norm", "lp_norm", "sobolev_norm", "__version__",
]
