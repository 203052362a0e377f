"""Gradient-scheme laboratory for linear and semilinear diffusion in 2D."""

from .kernels import BACKEND, CYTHON_AVAILABLE

__version__ = "0.1.0"
__all__ = ["BACKEND", "CYTHON_AVAILABLE", "__version__"]
