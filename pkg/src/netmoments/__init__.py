"""Gaussian moment methods for transport on networks of unit-interval domains."""

__version__ = "0.1.0"

from .errors import MomentError  # noqa: E402
from .gaussian_moments import Gaussian, MomentTriple, StatMoments  # noqa: E402

__all__ = ["Gaussian", "MomentError", "MomentTriple", "StatMoments", "__version__"]
