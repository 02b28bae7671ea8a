"""Witten-Laplacian heat flow on model manifolds and numerical Harnack checks."""

from . import diffusion, flowcheck, geometry, harnack, heat
from .errors import HarnackLabError

__version__ = "0.1.0"
__all__ = ["diffusion", "flowcheck", "geometry", "harnack", "heat", "HarnackLabError", "__version__"]
