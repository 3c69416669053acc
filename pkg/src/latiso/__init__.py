"""Nonparametric isotropy tests for data on a regular 2-d lattice.

Directional variograms are estimated at lags of equal length (Matheron,
Genton's Qn-based estimator or MCD.diff), and their contrasts are tested
with a subsampling or a block-permutation reference distribution.
"""

__version__ = "0.1.0"

from .errors import DataError, DegenerateError, LatisoError
from .isotest import TestResult, build_contrasts, permutation_test, subsampling_test, test_statistic
from .lattice import LAMBDA_1, LAMBDA_2, LAMBDA_3, Grid, Lag, LagSet, parse_lags
from .simulate import AnisoModel, ContaminationSpec, contaminate, simulate_grf
from .variogram import VariogramVector, estimate_vector

__all__ = [
    "AnisoModel",
    "ContaminationSpec",
    "DataError",
    "DegenerateError",
    "Grid",
    "LAMBDA_1",
    "LAMBDA_2",
    "LAMBDA_3",
    "Lag",
    "LagSet",
    "LatisoError",
    "TestResult",
    "VariogramVector",
    "__version__",
    "build_contrasts",
    "contaminate",
    "estimate_vector",
    "parse_lags",
    "permutation_test",
    "simulate_grf",
    "subsampling_test",
    "test_statistic",
]
