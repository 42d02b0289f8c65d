"""Numerics for the combined-power nonlinear Schroedinger equation on R^d x T."""
from .errors import WNLSError
from .functionals import ModelParams, eval_core
from .grid import Field, GridSpec, make_grid

__version__ = "0.1.0"

__all__ = ["Field", "GridSpec", "ModelParams", "WNLSError", "eval_core", "make_grid", "__version__"]
