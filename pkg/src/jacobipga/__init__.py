"""Geodesics, Jacobi fields and principal geodesic analysis on parametric and
implicit manifolds."""
from ._accel import backend
from .errors import *  # noqa: F401,F403

__version__ = "0.1.0"
