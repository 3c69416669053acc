"""Variogram estimators on lattice data and the estimate vector over a lag set.

Three estimators of ``2 gamma(h)`` are provided:

``matheron``
    mean of squared differences ``(Z(s) - Z(s+h))**2``.
``genton``
    squared Qn scale of the differences.
``mcd_diff``
    lags sharing a direction are estimated jointly as the diagonal of a
    reweighted MCD scatter of the difference vectors
    ``W(s) = (Z(s) - Z(s+h_1), ..., Z(s) - Z(s+h_m))``, times a small-sample
    correction factor calibrated by simulation.

Which anchors ``s`` enter is controlled by the *restriction*:
``per_lag`` uses every complete pair for the lag, ``joint`` only anchors at
which every lag of the set can be formed (edge correction), and
``within_blocks`` only pairs whose two cells fall in the same block.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import (
    DataError,
    EmptyLocationsError,
    SingularScatterError,
    TooFewPointsError,
    TooFewVectorsError,
    TooFewWeightedError,
)
from .lattice import Lag, LagSet, difference_field, joint_pair_mask, pair_mask
from .robust.mcd import consistency_factor, default_subset_size, mcd_reweighted, reweight_cutoff, reweight_factor
from .robust.scale import qn_scale

ESTIMATORS = ("matheron", "genton", "mcd_diff")
RESTRICTIONS = ("per_lag", "joint", "within_blocks")

CALIBRATION_REPS = 1000
CALIBRATION_REPS_MULTI = 200
_CALIBRATION_SEED = 20_240_917


def canonical_estimator(name):
    key = name.lower().replace("-", "_").replace(".", "_")
    if key not in ESTIMATORS:
        raise DataError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")
    return key


@dataclass
class VariogramVector:
    lam: LagSet
    estimates: np.ndarray
    pair_counts: np.ndarray
    estimator: str
    restriction: str
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.estimates = np.asarray(self.estimates, dtype=float)
        self.pair_counts = np.asarray(self.pair_counts, dtype=np.int64)
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.lam), dtype=bool)

    def as_dict(self):
        return {
            "estimator": self.estimator,
            "restriction": self.restriction,
            "lags": [[h.dx, h.dy] for h in self.lam],
            "estimates": [float(v) for v in self.estimates],
            "pair_counts": [int(c) for c in self.pair_counts],
            "degenerate": [bool(d) for d in self.degenerate],
        }


# ---------------------------------------------------------------------------
# estimators on a difference sample
# ---------------------------------------------------------------------------

def matheron_from_diffs(d):
    if d.size == 0:
        raise EmptyLocationsError("no pairs available for this lag")
    return float(np.mean(d * d))


def genton_from_diffs(d):
    if d.size < 2:
        raise TooFewPointsError(f"the Genton estimator needs at least 2 differences, got {d.size}")
    return qn_scale(d) ** 2


def _calibration_bucket(n, h_max):
    if h_max == 1 or n <= 200:
        return n
    return int(round(n / 50.0)) * 50


def mcd_diff_correction(n_vectors, h_max):
    """Multiplicative small-sample correction for MCD.diff estimates.

    The ratio of the true value to the mean estimate over simulated
    difference vectors of a unit-variance white-noise field, for
    ``n_vectors`` vectors of dimension ``h_max``. Cached per bucket.
    """
    return _calibrate(_calibration_bucket(int(n_vectors), int(h_max)), int(h_max))


@lru_cache(maxsize=None)
def _calibrate(n, h_max):
    rng = np.random.default_rng([_CALIBRATION_SEED, n, h_max])
    # W-vectors of independent unit-variance cells: Var = 2, Cov = 1
    cov = np.eye(h_max) + np.ones((h_max, h_max))
    chol = np.linalg.cholesky(cov)
    total, used = 0.0, 0
    for _ in range(CALIBRATION_REPS if h_max == 1 else CALIBRATION_REPS_MULTI):
        W = rng.standard_normal((n, h_max)) @ chol.T
        try:
            est = _mcd_diag(W, rng, None)
        except (SingularScatterError, TooFewWeightedError):
            continue
        total += est.mean()
        used += 1
    if used == 0 or total <= 0.0:
        return 1.0
    return 2.0 / (total / used)


def _mcd_diag(W, rng, subset_size):
    n, p = W.shape
    k = default_subset_size(n, p) if subset_size is None else int(subset_size)
    if p == 1:
        _, var, _, status = kernels.umcd_reweighted(
            W[:, 0], k, consistency_factor(k / n, 1), reweight_cutoff(1), reweight_factor(1)
        )
        if status == kernels.UMCD_DEGENERATE:
            raise SingularScatterError("more than half of the differences are tied")
        if status == kernels.UMCD_TOO_FEW:
            raise TooFewWeightedError("fewer than two differences kept by reweighting")
        return np.array([var])
    return np.diag(mcd_reweighted(W, k, rng).scatter).copy()


def mcd_diff_from_vectors(W, rng=None, correction=True, subset_size=None):
    """MCD.diff estimates from an ``n x h_max`` array of difference vectors.

    ``correction`` is ``True`` (factor calibrated at this sample size),
    ``False``, or explicit factors to multiply by.

    Returns ``(estimates, degenerate)``; a sample without variability gives
    zeros and ``degenerate=True``.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    n, p = W.shape
    if n < 2 * p + 1:
        raise TooFewVectorsError(f"MCD.diff with {p} lag(s) needs at least {2 * p + 1} vectors, got {n}")
    if not np.any(W != W[0]):
        return np.zeros(p), True
    try:
        est = _mcd_diag(W, rng, subset_size)
    except SingularScatterError:
        if p == 1:
            return np.zeros(1), True
        raise
    if correction is True:
        est = est * mcd_diff_correction(n, p)
    elif correction is not False and correction is not None:
        est = est * np.asarray(correction, dtype=float)
    return est, False


# ---------------------------------------------------------------------------
# single-lag entry points taking explicit locations
# ---------------------------------------------------------------------------

def _diffs_at(grid, h, locations):
    h = Lag(*h)
    field_ = difference_field(grid.values, h)
    if locations is None:
        d = field_[~np.isnan(field_)]
    else:
        loc = np.asarray(locations, dtype=np.int64).reshape(-1, 2)
        d = field_[loc[:, 1], loc[:, 0]]
        if np.isnan(d).any():
            raise DataError(f"some locations do not form a complete pair at lag {h}")
    return d


def matheron(grid, h, locations=None):
    """Method-of-moments estimate of ``2 gamma(h)`` and the number of pairs used."""
    d = _diffs_at(grid, h, locations)
    return matheron_from_diffs(d), d.size


def genton(grid, h, locations=None):
    """Squared Qn of the differences at lag ``h`` and the number of pairs used."""
    d = _diffs_at(grid, h, locations)
    if d.size == 0:
        raise EmptyLocationsError(f"no pairs available for lag {Lag(*h)}")
    return genton_from_diffs(d), d.size


def _check_direction(lags):
    dirs = {Lag(*h).direction()[0] for h in lags}
    if len(dirs) != 1:
        raise DataError("MCD.diff lags must share one direction")


def difference_vectors(values, lags, mask):
    """Stack ``Z(s) - Z(s+h_j)`` over ``lags`` for anchors where ``mask`` holds."""
    cols = [difference_field(values, Lag(*h))[mask] for h in lags]
    W = np.column_stack(cols) if cols else np.empty((0, 0))
    return W[~np.isnan(W).any(axis=1)]


def mcd_diff(grid, lags, locations=None, rng=None, correction=True, subset_size=None):
    """Joint MCD.diff estimates for lags along one direction.

    Returns ``(estimates, n_vectors, degenerate)``.
    """
    lags = [Lag(*h) for h in lags]
    _check_direction(lags)
    if locations is None:
        mask = joint_pair_mask(grid.values, lags)
    else:
        loc = np.asarray(locations, dtype=np.int64).reshape(-1, 2)
        mask = np.zeros(grid.shape, dtype=bool)
        mask[loc[:, 1], loc[:, 0]] = True
    W = difference_vectors(grid.values, lags, mask)
    est, degenerate = mcd_diff_from_vectors(W, rng, correction, subset_size)
    return est, W.shape[0], degenerate


# ---------------------------------------------------------------------------
# restriction masks and the estimate vector
# ---------------------------------------------------------------------------

def within_blocks_mask(values, lags, blocks):
    """Anchors whose pairs for every lag in ``lags`` stay inside one block."""
    mask = np.zeros(values.shape, dtype=bool)
    for b in blocks:
        ys, xs = b.slices
        mask[ys, xs] = joint_pair_mask(values[ys, xs], lags)
    return mask


def restriction_mask(values, lags, restriction, lam=None, blocks=None):
    if restriction == "per_lag":
        return joint_pair_mask(values, lags)
    if restriction == "joint":
        return joint_pair_mask(values, lam if lam is not None else lags)
    if restriction == "within_blocks":
        if blocks is None:
            raise DataError("the within_blocks restriction needs a block partition")
        return within_blocks_mask(values, lags, blocks)
    raise DataError(f"unknown restriction {restriction!r}")


def estimate_vector(
    grid,
    lam,
    estimator="matheron",
    restriction="per_lag",
    blocks=None,
    rng=None,
    correction=True,
    subset_size=None,
):
    """Estimate ``2 gamma(h)`` for every lag of ``lam``.

    Parameters
    ----------
    grid : Grid
    lam : LagSet
    estimator : {"matheron", "genton", "mcd_diff"}
    restriction : {"per_lag", "joint", "within_blocks"}
    blocks : list of Block, optional
        Required for ``within_blocks``.
    rng : numpy.random.Generator, optional
        Used by MCD.diff when a direction holds several lags.
    correction : bool
        Apply the MCD.diff small-sample correction.

    Returns
    -------
    VariogramVector
    """
    if not isinstance(lam, LagSet):
        lam = LagSet(lam)
    estimator = canonical_estimator(estimator)
    if restriction not in RESTRICTIONS:
        raise DataError(f"unknown restriction {restriction!r}")
    values = grid.values
    if restriction == "within_blocks":
        if blocks is None:
            raise DataError("the within_blocks restriction needs a block partition")
        est, counts, degenerate = _within_blocks_vector(values, lam, estimator, blocks, rng, correction, subset_size)
    else:
        fields = [difference_field(values, h) for h in lam]
        mask = joint_pair_mask(values, lam) if restriction == "joint" else None
        est, counts, degenerate = vector_from_fields(fields, lam, estimator, mask, rng, correction, subset_size)
    return VariogramVector(lam, est, counts, estimator, restriction, degenerate)


def vector_from_fields(fields, lam, estimator, mask=None, rng=None, correction=True, subset_size=None):
    """Estimate vector from precomputed difference fields.

    ``fields[i]`` holds ``Z(s) - Z(s + h_i)`` (NaN where incomplete). With
    ``mask`` only those anchors enter; without it each lag (or, for
    MCD.diff, each direction) uses all its complete anchors.

    Returns ``(estimates, counts, degenerate)``.
    """
    m = len(lam)
    est = np.zeros(m)
    counts = np.zeros(m, dtype=np.int64)
    degenerate = np.zeros(m, dtype=bool)
    if estimator == "mcd_diff":
        for _, idx in lam.direction_groups():
            W = np.column_stack([fields[i].reshape(-1) if mask is None else fields[i][mask] for i in idx])
            W = W[~np.isnan(W).any(axis=1)]
            corr = correction if isinstance(correction, bool) else np.asarray(correction)[idx]
            e, deg = mcd_diff_from_vectors(W, rng, corr, subset_size)
            est[idx] = e
            counts[idx] = W.shape[0]
            degenerate[idx] = deg
        return est, counts, degenerate
    for i in range(m):
        d = fields[i] if mask is None else fields[i][mask]
        d = d[~np.isnan(d)]
        if estimator == "matheron":
            est[i] = matheron_from_diffs(d)
        else:
            est[i] = genton_from_diffs(d)
            degenerate[i] = est[i] == 0.0
        counts[i] = d.size
    return est, counts, degenerate


def _within_blocks_vector(values, lam, estimator, blocks, rng, correction, subset_size):
    m = len(lam)
    est = np.zeros(m)
    counts = np.zeros(m, dtype=np.int64)
    degenerate = np.zeros(m, dtype=bool)
    units = [idx for _, idx in lam.direction_groups()] if estimator == "mcd_diff" else [[i] for i in range(m)]
    for idx in units:
        lags = [lam[i] for i in idx]
        mask = within_blocks_mask(values, lags, blocks)
        fields = [difference_field(values, h) for h in lags]
        sub = LagSet(lags)
        e, c, deg = vector_from_fields(fields, sub, estimator, mask, rng, correction, subset_size)
        est[idx], counts[idx], degenerate[idx] = e, c, deg
    return est, counts, degenerate


def correction_factors(vv):
    """Per-lag MCD.diff correction factors at the sample sizes of ``vv``."""
    out = np.ones(len(vv.lam))
    if vv.estimator == "mcd_diff":
        for _, idx in vv.lam.direction_groups():
            out[idx] = mcd_diff_correction(int(vv.pair_counts[idx[0]]), len(idx))
    return out


def count_pairs(grid, h, restriction="per_lag", lam=None, blocks=None):
    """Number of pairs at lag ``h`` under a restriction."""
    return int(restriction_mask(grid.values, [Lag(*h)], restriction, lam, blocks).sum())


__all__ = [
    "ESTIMATORS",
    "RESTRICTIONS",
    "VariogramVector",
    "count_pairs",
    "difference_vectors",
    "estimate_vector",
    "genton",
    "matheron",
    "mcd_diff",
    "mcd_diff_correction",
    "mcd_diff_from_vectors",
    "pair_mask",
]
