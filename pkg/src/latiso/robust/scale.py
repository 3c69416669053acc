"""Univariate robust scale estimators."""

import numpy as np

from .. import kernels
from ..errors import TooFewPointsError

QN_CONSTANT = 2.2219
MAD_CONSTANT = 1.4826

# small-sample correction factors for Qn, indexed by n = 2..9
_QN_SMALL_N = {2: 0.399, 3: 0.994, 4: 0.512, 5: 0.844, 6: 0.611, 7: 0.857, 8: 0.669, 9: 0.872}


def qn_rank(n):
    """Rank of the pairwise-gap order statistic used by Qn for ``n`` points."""
    h = n // 2 + 1
    return h * (h - 1) // 2


def qn_correction(n):
    """Finite-sample multiplier applied on top of :data:`QN_CONSTANT`."""
    n = np.asarray(n)
    if n.ndim == 0:
        n = int(n)
        if n in _QN_SMALL_N:
            return _QN_SMALL_N[n]
        return n / (n + 1.4) if n % 2 else n / (n + 3.8)
    out = np.where(n % 2 == 1, n / (n + 1.4), n / (n + 3.8)).astype(float)
    for m, f in _QN_SMALL_N.items():
        out[n == m] = f
    return out


def qn_scale(x):
    """Qn scale estimate of a 1-d sample.

    Parameters
    ----------
    x : array_like
        Sample of size n >= 2; must not contain NaN.

    Returns
    -------
    float
        ``c_n * 2.2219 * gap_(k)`` where ``gap_(k)`` is the ``k``-th smallest
        of the ``n(n-1)/2`` absolute pairwise differences,
        ``k = C(floor(n/2) + 1, 2)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0]
    if n < 2:
        raise TooFewPointsError(f"Qn needs at least 2 points, got {n}")
    gap = kernels.qn_gap(x, qn_rank(n))
    return QN_CONSTANT * qn_correction(n) * gap


def mad(x):
    """Normal-consistent median absolute deviation (factor 1.4826)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] < 1:
        raise TooFewPointsError("MAD needs at least one point")
    med = np.median(x)
    return MAD_CONSTANT * float(np.median(np.abs(x - med)))
