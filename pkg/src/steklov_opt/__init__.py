"""Steklov eigenvalue shape optimisation for star-shaped domains in 3D and 4D."""
from .geometry import HarmonicCoefficients, InvalidDomainError, build_quadrature, volume
from .mfs import assemble, solve_eigen
from .shape_opt import Discretization, OptimizerSettings, cluster, evaluate, optimize
from .sphere_points import build_collocation

__version__ = "0.1.0"

__all__ = [
    "HarmonicCoefficients",
    "InvalidDomainError",
    "Discretization",
    "OptimizerSettings",
    "assemble",
    "build_collocation",
    "build_quadrature",
    "cluster",
    "evaluate",
    "optimize",
    "solve_eigen",
    "volume",
]
