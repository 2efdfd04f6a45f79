"""Return-time large deviations for Gibbs measures on Markov interval maps."""

__version__ = "0.1.0"

from .dynamics import MarkovMapSpec, build_map, encode, cylinder
from .thermo import Potential, gibbs_measure, spectrum_T, moran_T, dimension, curvature
from .rates import rate_profile, lambda_star, psi_rate, g1, g2, theorem25_lower_bounds
from .measure import measure_interval, ball_measure
from .mc_lab import return_time, empirical_tail, kac_check

__all__ = [
    "MarkovMapSpec", "build_map", "encode", "cylinder",
    "Potential", "gibbs_measure", "spectrum_T", "moran_T", "dimension", "curvature",
    "rate_profile", "lambda_star", "psi_rate", "g1", "g2", "theorem25_lower_bounds",
    "measure_interval", "ball_measure",
    "return_time", "empirical_tail", "kac_check",
]
