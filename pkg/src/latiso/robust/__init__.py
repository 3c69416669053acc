"""Robust scale and scatter estimators and the chi-square numerics they use."""

from .chi2 import chi_sq_cdf, chi_sq_quantile, chi_sq_sf
from .mcd import McdResult, c_step, mcd_raw, mcd_reweighted
from .scale import mad, qn_scale

__all__ = [
    "McdResult",
    "c_step",
    "chi_sq_cdf",
    "chi_sq_quantile",
    "chi_sq_sf",
    "mad",
    "mcd_raw",
    "mcd_reweighted",
    "qn_scale",
]
