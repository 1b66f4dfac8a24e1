"""Efficient independent component analysis.

The estimator solves the empirical efficient-score equation for the
unmixing matrix with an approximate Newton-Raphson iteration, using
B-spline sieve estimates of each source's density score.
"""

from effica.errors import EfficaError
from effica.initializer import fastica_init
from effica.metrics import amari_error, frobenius_error
from effica.solver import SolverConfig, UnmixingEstimate, run

__all__ = [
    "EfficaError",
    "SolverConfig",
    "UnmixingEstimate",
    "amari_error",
    "fastica_init",
    "frobenius_error",
    "run",
]
__version__ = "0.1.0"
