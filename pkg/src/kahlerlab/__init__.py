"""Numerical laboratory for Kahler metrics inside the space of Riemannian metrics."""

from .grid import Density, GridSpec, sphere_grid, torus_grid
from .report import Report

__version__ = "0.1.0"

__all__ = ["Density", "GridSpec", "Report", "sphere_grid", "torus_grid", "__version__"]
