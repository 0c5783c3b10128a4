"""Effective potential analytic continuation for one-dimensional quantum systems.

Modules: ``model`` (potentials), ``oracle`` (exact spectrum and correlators),
``sampler`` (constrained-centroid path-integral Monte Carlo), ``transform``
(generating function, Legendre transform, parameter extraction), ``epac``
(correlators, closed forms, schemes A and B) and ``cli``.
"""

from .epac import epac_autocorrelation, run_scheme
from .model import ThermoState, named_system, parse_potential
from .oracle import exact_autocorrelation, solve_bound_states
from .sampler import PathEnsembleConfig, build_centroid_table
from .transform import extract_parameters, generating_function, legendre_transform

__version__ = "0.1.0"

__all__ = [
    "PathEnsembleConfig",
    "ThermoState",
    "build_centroid_table",
    "epac_autocorrelation",
    "exact_autocorrelation",
    "extract_parameters",
    "generating_function",
    "legendre_transform",
    "named_system",
    "parse_potential",
    "run_scheme",
    "solve_bound_states",
]
