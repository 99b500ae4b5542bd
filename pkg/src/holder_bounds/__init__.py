"""Numerical estimation and verification of Hölder error bounds and calmness rates."""
from .errors import HolderBoundsError
from .functions import (FinGenConvexSet, MaxFamily, Piecewise1D, PlusPart, PowerWrap, Smooth,
                        SmoothPiece, Staircase1D, affine, constant, power_sum, quadratic)
from .geometry import distance_to_set, min_norm_point, sublevel_distance
from .instances import builtin_instance, load_instance
from .moduli import (LiminfQuery, estimate_Er, estimate_Er_under, estimate_Er_under_prime)
from .sip import SIProgram, solve

__version__ = "0.1.0"

__all__ = [
    "HolderBoundsError", "FinGenConvexSet", "MaxFamily", "Piecewise1D", "PlusPart", "PowerWrap",
    "Smooth", "SmoothPiece", "Staircase1D", "affine", "constant", "power_sum", "quadratic",
    "distance_to_set", "min_norm_point", "sublevel_distance", "builtin_instance", "load_instance",
    "LiminfQuery", "estimate_Er", "estimate_Er_under", "estimate_Er_under_prime", "SIProgram", "solve",
]
