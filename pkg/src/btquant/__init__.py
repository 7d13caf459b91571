"""Berezin-Toeplitz transport, fixed-point coefficients and torus traces.

Submodules:
    symplectic   linear symplectic algebra, compatible structures, branch-tracked roots
    paths        paths of compatible structures
    polynomial   polynomials and Gaussian (Wick) moments
    gaussian     model Bergman kernels, compositions and quadrature checks
    transport    transport factors mu, tau^K along a path
    fixed_point  leading trace coefficients at fixed points and components
    torus        exact quantization of the flat torus
    cli          batch command-line front end
"""

from .errors import BTQuantError
from .fixed_point import FixedComponentDatum, FixedPointDatum, leading_coeff_isolated, trace_prediction
from .gaussian import compose, kernel_of, quadrature_compose
from .paths import DiagonalScaling, SiegelSegment, UpperHalfPlaneSegment
from .symplectic import CompatibleStructure, standard_J, structure_from_tau, validate_compatible
from .transport import PathDiscretization, mu, transport_factors

__version__ = "0.1.0"

__all__ = [
    "BTQuantError", "CompatibleStructure", "DiagonalScaling", "FixedComponentDatum", "FixedPointDatum",
    "PathDiscretization", "SiegelSegment", "UpperHalfPlaneSegment", "compose", "kernel_of",
    "leading_coeff_isolated", "mu", "quadrature_compose", "standard_J", "structure_from_tau",
    "trace_prediction", "transport_factors", "validate_compatible", "__version__",
]
