"""Minimum covariance determinant (MCD) location and scatter.

Three search strategies share one result type:

* ``p == 1``: exact. The optimal univariate subset is a run of ``k``
  consecutive order statistics, so a sliding window over the sorted sample
  finds it.
* ``p >= 2`` and ``n <= 20``: exhaustive enumeration of all k-subsets.
* otherwise FASTMCD (Rousseeuw & Van Driessen, 1999): random (p+1)-subsets
  expanded to size k, two concentration steps each, then the ten best
  candidates iterated to convergence.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import chain, combinations, islice

import numpy as np

from ..errors import SingularScatterError, TooFewPointsError, TooFewWeightedError
from .chi2 import chi_sq_cdf, chi_sq_quantile

N_STARTS = 500
N_BEST = 10
EXHAUSTIVE_MAX_N = 20
REWEIGHT_QUANTILE = 0.975
_SINGULAR_RTOL = 1e-12
_MAX_CSTEPS = 200


@dataclass
class McdResult:
    location: np.ndarray
    scatter: np.ndarray
    raw_support: np.ndarray
    weights: np.ndarray
    correction: float
    raw_location: np.ndarray = None
    raw_scatter: np.ndarray = None

    @property
    def n_weighted(self):
        return int(self.weights.sum())


@lru_cache(maxsize=None)
def consistency_factor(alpha, p):
    """Gaussian consistency factor of the raw MCD scatter at coverage ``alpha``."""
    if alpha >= 1.0:
        return 1.0
    q = chi_sq_quantile(alpha, p)
    return alpha / chi_sq_cdf(q, p + 2)


@lru_cache(maxsize=None)
def reweight_cutoff(p):
    return chi_sq_quantile(REWEIGHT_QUANTILE, p)


@lru_cache(maxsize=None)
def reweight_factor(p):
    """Consistency factor for the covariance of the points kept by reweighting."""
    return REWEIGHT_QUANTILE / chi_sq_cdf(reweight_cutoff(p), p + 2)


def default_subset_size(n, p):
    """Maximal-breakdown subset size floor((n + p + 1) / 2)."""
    return (n + p + 1) // 2


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("X must be a 1-d sample or an n x p matrix")
    return X


def _check_k(n, p, k):
    if n <= p:
        raise TooFewPointsError(f"MCD needs n > p, got n={n}, p={p}")
    if k is None:
        return default_subset_size(n, p)
    k = int(k)
    if not default_subset_size(n, p) <= k <= n:
        raise ValueError(f"subset size must lie in [{default_subset_size(n, p)}, {n}], got {k}")
    return k


def _mean_cov(Xs):
    mu = Xs.mean(axis=0)
    centered = Xs - mu
    return mu, centered.T @ centered / (Xs.shape[0] - 1)


def _is_singular(S, scale):
    w = np.linalg.eigvalsh(S)
    return w[0] <= _SINGULAR_RTOL * scale


def _sq_mahalanobis(X, mu, S):
    diff = X - mu
    return np.einsum("ij,ij->i", diff @ np.linalg.inv(S), diff)


def c_step(X, subset):
    """One concentration step.

    Returns the ``k = len(subset)`` points with the smallest squared
    Mahalanobis distance with respect to the mean and covariance of
    ``X[subset]``, as a sorted index array. The covariance determinant of the
    new subset never exceeds that of the old one.
    """
    X = _as_matrix(X)
    subset = np.asarray(subset)
    k = subset.shape[0]
    mu, S = _mean_cov(X[subset])
    if not np.any(S) or _is_singular(S, np.abs(S).max()):
        raise SingularScatterError("subset covariance is singular")
    d2 = _sq_mahalanobis(X, mu, S)
    return np.sort(np.argsort(d2, kind="stable")[:k])


def _finish(X, support, k):
    n, p = X.shape
    mu, S = _mean_cov(X[support])
    c = consistency_factor(k / n, p)
    return McdResult(
        location=mu,
        scatter=S * c,
        raw_support=np.sort(support),
        weights=np.zeros(n, dtype=np.int8),
        correction=c,
        raw_location=mu,
        raw_scatter=S * c,
    )


def _univariate_support(x, k):
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    ys = x[order]
    d = ys - ys[n // 2]
    cs1 = np.concatenate(([0.0], np.cumsum(d)))
    cs2 = np.concatenate(([0.0], np.cumsum(d * d)))
    s1 = cs1[k:] - cs1[: n - k + 1]
    s2 = cs2[k:] - cs2[: n - k + 1]
    t = int(np.argmin(s2 - s1 * s1 / k))
    window = ys[t : t + k]
    if not np.max(window) > np.min(window):
        raise SingularScatterError("more than half of the sample is tied")
    return order[t : t + k]


def _exhaustive_support(X, k, scale):
    n, p = X.shape
    best_det, best = np.inf, None
    combos = combinations(range(n), k)
    while True:
        flat = np.fromiter(chain.from_iterable(islice(combos, 20000)), dtype=np.int64)
        if flat.size == 0:
            break
        chunk = flat.reshape(-1, k)
        Xs = X[chunk]
        centered = Xs - Xs.mean(axis=1, keepdims=True)
        S = np.einsum("mki,mkj->mij", centered, centered) / (k - 1)
        dets = np.linalg.det(S)
        dets[dets <= _SINGULAR_RTOL * scale**p] = np.inf
        j = int(np.argmin(dets))
        if dets[j] < best_det:
            best_det, best = dets[j], chunk[j]
    if best is None:
        raise SingularScatterError("every k-subset has a singular covariance")
    return best


def _batch_cov(X, H):
    Xs = X[H]
    mu = Xs.mean(axis=1)
    centered = Xs - mu[:, None, :]
    S = np.einsum("mki,mkj->mij", centered, centered) / (H.shape[1] - 1)
    return mu, S


def _batch_csteps(X, mu, S, k, n_steps, scale):
    ok = np.linalg.eigvalsh(S)[:, 0] > _SINGULAR_RTOL * scale
    H = None
    for _ in range(n_steps + 1):
        S[~ok] = np.eye(X.shape[1])
        diff = X[None, :, :] - mu[:, None, :]
        d2 = (np.matmul(diff, np.linalg.inv(S)) * diff).sum(axis=2)
        H_new = np.argpartition(d2, k - 1, axis=1)[:, :k]
        H = H_new if H is None else np.where(ok[:, None], H_new, H)
        mu, S = _batch_cov(X, H)
        ok &= np.linalg.eigvalsh(S)[:, 0] > _SINGULAR_RTOL * scale
    dets = np.where(ok, np.linalg.det(S), np.inf)
    return H, dets


def _initial_subsets(X, rng, n_starts, scale):
    """Random (p+1)-subsets, each grown until its covariance is invertible."""
    n, p = X.shape
    order = np.argsort(rng.random((n_starts, n)), axis=1)
    mu, S = _batch_cov(X, order[:, : p + 1])
    singular = np.flatnonzero(np.linalg.eigvalsh(S)[:, 0] <= _SINGULAR_RTOL * scale)
    for i in singular:
        for m in range(p + 2, n + 1):
            mu_i, S_i = _mean_cov(X[order[i, :m]])
            if not _is_singular(S_i, scale):
                break
        mu[i], S[i] = mu_i, S_i
    return mu, S


def _fastmcd_support(X, k, rng, n_starts, n_best, scale):
    mu, S = _initial_subsets(X, rng, n_starts, scale)
    H, dets = _batch_csteps(X, mu, S, k, 2, scale)
    if not np.isfinite(dets).any():
        raise SingularScatterError("every candidate subset has a singular covariance")
    best_idx = np.argsort(dets, kind="stable")[:n_best]
    best_det, best = np.inf, None
    for i in best_idx:
        if not np.isfinite(dets[i]):
            continue
        h = np.sort(H[i])
        det = dets[i]
        for _ in range(_MAX_CSTEPS):
            try:
                h_new = c_step(X, h)
            except SingularScatterError:
                break
            if np.array_equal(h_new, h):
                break
            h = h_new
            det = np.linalg.det(_mean_cov(X[h])[1])
        if det < best_det:
            best_det, best = det, h
    if best is None:
        raise SingularScatterError("every candidate subset has a singular covariance")
    return best


def mcd_raw(X, k=None, rng=None, n_starts=N_STARTS, n_best=N_BEST):
    """Raw MCD estimate.

    Parameters
    ----------
    X : array_like, shape (n, p) or (n,)
        Data; rows are observations.
    k : int, optional
        Subset size in ``[floor((n+p+1)/2), n]``; defaults to the lower bound.
    rng : numpy.random.Generator, optional
        Only consumed by FASTMCD (p >= 2, n > 20).

    Returns
    -------
    McdResult
        Location and consistency-corrected scatter of the best subset found.
        ``weights`` is all zero at this stage.
    """
    X = _as_matrix(X)
    n, p = X.shape
    k = _check_k(n, p, k)
    if k == n:
        S = _mean_cov(X)[1]
        if not np.any(S) or _is_singular(S, np.abs(S).max()):
            raise SingularScatterError("sample covariance is singular")
        return _finish(X, np.arange(n), k)
    if p == 1:
        return _finish(X, _univariate_support(X[:, 0], k), k)
    scale = float(np.linalg.eigvalsh(_mean_cov(X)[1])[-1])
    if scale <= 0.0:
        raise SingularScatterError("sample has zero variability")
    if n <= EXHAUSTIVE_MAX_N:
        support = _exhaustive_support(X, k, scale)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        support = _fastmcd_support(X, k, rng, n_starts, n_best, scale)
    return _finish(X, support, k)


def mcd_reweighted(X, k=None, rng=None, n_starts=N_STARTS, n_best=N_BEST):
    """Reweighted MCD.

    Points whose squared Mahalanobis distance from the raw estimate is within
    the 0.975 chi-square quantile keep weight one; the result is their mean
    and covariance, the latter times ``0.975 / F_{p+2}(q_{p,0.975})``.
    """
    X = _as_matrix(X)
    n, p = X.shape
    raw = mcd_raw(X, k, rng, n_starts, n_best)
    d2 = _sq_mahalanobis(X, raw.location, raw.scatter)
    keep = d2 <= reweight_cutoff(p)
    if keep.sum() < p + 1:
        raise TooFewWeightedError(f"only {int(keep.sum())} points kept by reweighting")
    mu, S = _mean_cov(X[keep])
    c1 = reweight_factor(p)
    return McdResult(
        location=mu,
        scatter=S * c1,
        raw_support=raw.raw_support,
        weights=keep.astype(np.int8),
        correction=c1,
        raw_location=raw.location,
        raw_scatter=raw.scatter,
    )
