"""Contrast construction, the quadratic-form statistic and the two resampling tests.

Under isotropy ``A G = 0`` for a contrast matrix ``A`` whose rows compare
variogram values at lags of equal length. The statistic

    TS = n_eff * (A G)^T (A S A^T)^{-1} (A G)

is referred to its resampling distribution (windows or block rotations) and,
for reference, to a chi-square law with ``rank(A)`` degrees of freedom.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, IrreparableCovarianceError, NoTestableContrastsError, SingularScatterError
from .lattice import LAMBDA_3, LagSet, partition_blocks
from .resampling import (
    CovarianceEstimate,
    default_block_side,
    permutation_covariance,
    permutation_ensemble,
    subsample_ensemble,
    subsampling_covariance,
)
from .robust.chi2 import chi_sq_sf
from .variogram import canonical_estimator, correction_factors, estimate_vector

COND_THRESHOLD = 1e10
RIDGE_FRACTION = 0.1
DEFAULT_ALPHA = 0.05
DEFAULT_B = 1000

CONSERVATIVE_WARNING = (
    "MCD.diff with the L3 lag set under block permutation is known to be very "
    "conservative: its type-I error rate is far below the nominal level"
)


@dataclass
class ContrastMatrix:
    rows: np.ndarray
    d: int

    def __matmul__(self, other):
        return self.rows @ other


def build_contrasts(lam):
    """Contrast rows pairing consecutive lags inside each equal-norm group.

    A group ``g_0, g_1, ..., g_{m-1}`` yields rows ``g_0 - g_1``,
    ``g_2 - g_3``, ...; an odd group adds ``g_{m-2} - g_{m-1}`` so that every
    member is compared.
    """
    if not isinstance(lam, LagSet):
        lam = LagSet(lam)
    rows = []
    for group in lam.groups:
        pairs = [(group[i], group[i + 1]) for i in range(0, len(group) - 1, 2)]
        if len(group) % 2 == 1 and len(group) > 1:
            pairs.append((group[-2], group[-1]))
        for a, b in pairs:
            r = np.zeros(len(lam), dtype=np.int64)
            r[a], r[b] = 1, -1
            rows.append(r)
    if not rows:
        raise NoTestableContrastsError("no two lags of the set share a length")
    A = np.array(rows)
    return ContrastMatrix(A, int(np.linalg.matrix_rank(A)))


def regularize(M, threshold=COND_THRESHOLD):
    """Add ``0.1 * trace(M) / d`` to the diagonal if ``M`` is ill-conditioned.

    Returns ``(matrix, fired)``.
    """
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    try:
        np.linalg.inv(M)
        cond = np.linalg.cond(M)
        ok = np.isfinite(cond) and cond <= threshold
    except np.linalg.LinAlgError:
        ok = False
    if ok:
        return M, False
    tr = float(np.trace(M))
    if tr <= 0.0:
        raise IrreparableCovarianceError("covariance is singular and has no positive variance to borrow")
    return M + RIDGE_FRACTION * (tr / d) * np.eye(d), True


def _quadratic_forms(Y, Minv):
    # row by row so that identical rows give bit-identical statistics
    return np.array([max(0.0, float(y @ Minv @ y)) for y in Y])


def test_statistic(G, sigma, A, n_eff):
    """``n_eff * (A G)^T (A S A^T)^{-1} (A G)`` after conditional regularization.

    ``G`` may be a :class:`VariogramVector` or an array; ``sigma`` a
    :class:`CovarianceEstimate` or a matrix. Returns ``(TS, fired)``.
    """
    g = getattr(G, "estimates", G)
    S = getattr(sigma, "matrix", sigma)
    rows = getattr(A, "rows", A)
    M, fired = regularize(rows @ S @ rows.T)
    Minv = np.linalg.inv(M)
    return n_eff * _quadratic_forms((rows @ np.asarray(g, dtype=float))[None, :], Minv)[0], fired


def asymptotic_pvalue(ts, d):
    """Upper chi-square tail probability with ``d`` degrees of freedom."""
    if ts < 0:
        raise ValueError(f"test statistic must be non-negative, got {ts}")
    return chi_sq_sf(float(ts), int(d))


@dataclass
class TestResult:
    statistic: float
    d: int
    p_asymptotic: float
    p_resampling: float
    method: str
    estimator: str
    lam: LagSet
    seed: int
    alpha: float = DEFAULT_ALPHA
    estimates: object = None
    covariance: CovarianceEstimate = None
    diagnostics: dict = field(default_factory=dict)

    __test__ = False

    @property
    def reject(self):
        return self.p_resampling <= self.alpha

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "d": self.d,
            "p_asymptotic": self.p_asymptotic,
            "p_resampling": self.p_resampling,
            "p_name": "p_sub" if self.method == "subsampling" else "p_block",
            "reject": self.reject,
            "alpha": self.alpha,
            "method": self.method,
            "estimator": self.estimator,
            "lags": [[h.dx, h.dy] for h in self.lam],
            "seed": self.seed,
            "estimates": None if self.estimates is None else self.estimates.as_dict(),
            "covariance": None if self.covariance is None else self.covariance.as_dict(),
            "diagnostics": self.diagnostics,
        }


def _streams(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _covariance_or_fallback(make_robust, vectors, scale, source, diag):
    try:
        return make_robust()
    except SingularScatterError as exc:
        diag["scatter_fallback"] = str(exc)
        C = np.cov(vectors, rowvar=False, ddof=1).reshape(vectors.shape[1], -1)
        return CovarianceEstimate(C * scale, source, robust=False, rank=int(np.linalg.matrix_rank(C)), scaling=scale)


def subsampling_test(
    grid,
    lam,
    estimator="matheron",
    window_side=None,
    seed=0,
    robust=True,
    edge_correction=True,
    alpha=DEFAULT_ALPHA,
):
    """Subsampling isotropy test.

    The full-grid vector and every window vector are compared to a single
    covariance estimated from the windows. The p-value is the fraction of
    windows whose statistic is at least the full-grid one.
    """
    if not isinstance(lam, LagSet):
        lam = LagSet(lam)
    estimator = canonical_estimator(estimator)
    A = build_contrasts(lam)
    (rng,) = _streams(seed, 1)
    G = estimate_vector(grid, lam, estimator, "joint" if edge_correction else "per_lag", rng=rng)
    # windows borrow the full-grid MCD.diff correction so it cancels in the comparison
    ens = subsample_ensemble(grid, lam, estimator, window_side, rng, edge_correction, correction_factors(G))
    diag = {
        "window_side": ens.window_side,
        "k_n": ens.k_n,
        "dropped_windows": ens.dropped,
        "f_n": ens.f_n,
        "n_eff": grid.n_observed,
        "edge_correction": edge_correction,
        "robust_covariance": robust,
        "shared_covariance": True,
    }
    if robust:
        sigma = _covariance_or_fallback(
            lambda: subsampling_covariance(ens, True, rng),
            ens.vectors,
            float(ens.sizes.mean()) / ens.f_n,
            "subsampling",
            diag,
        )
    else:
        sigma = subsampling_covariance(ens, False)
    M, fired = regularize(A.rows @ sigma.matrix @ A.rows.T)
    diag["regularized"] = fired
    Minv = np.linalg.inv(M)
    ts = grid.n_observed * _quadratic_forms((A.rows @ G.estimates)[None, :], Minv)[0]
    ts_win = ens.sizes * _quadratic_forms(ens.vectors @ A.rows.T, Minv)
    p_sub = float(np.mean(ts_win >= ts))
    return TestResult(
        statistic=float(ts),
        d=A.d,
        p_asymptotic=asymptotic_pvalue(ts, A.d),
        p_resampling=p_sub,
        method="subsampling",
        estimator=estimator,
        lam=lam,
        seed=seed,
        alpha=alpha,
        estimates=G,
        covariance=sigma,
        diagnostics=diag,
    )


def permutation_test(
    grid,
    lam,
    estimator="matheron",
    block_side=None,
    B=DEFAULT_B,
    seed=0,
    add_one=False,
    alpha=DEFAULT_ALPHA,
):
    """Block-permutation isotropy test.

    Each of ``B`` replicates rotates every block by 90 degrees with
    probability 1/2. All statistics share one covariance estimated from the
    replicate vectors. ``p_block`` is the fraction of replicates whose
    statistic is at least the original's, or ``(1 + count) / (B + 1)`` with
    ``add_one``.
    """
    if not isinstance(lam, LagSet):
        lam = LagSet(lam)
    estimator = canonical_estimator(estimator)
    if B < 100:
        raise DataError(f"B must be at least 100, got {B}")
    A = build_contrasts(lam)
    if block_side is None:
        block_side = default_block_side(min(grid.rows, grid.cols))
    blocks = partition_blocks(grid, block_side)
    rng_mask, rng_mcd = _streams(seed, 2)
    ens = permutation_ensemble(grid, lam, estimator, blocks, B, rng_mask, rng_mcd=rng_mcd)
    diag = {
        "block_side": block_side,
        "n_blocks": len(blocks),
        "B": B,
        "n_eff": ens.n_eff,
        "restriction": "within_blocks",
        "add_one": add_one,
        "shared_covariance": True,
        "warnings": [],
    }
    if estimator == "mcd_diff" and lam == LAMBDA_3:
        diag["warnings"].append(CONSERVATIVE_WARNING)
    sigma = _covariance_or_fallback(
        lambda: permutation_covariance(ens, rng_mcd), ens.vectors, float(ens.n_eff), "permutation", diag
    )
    try:
        M, fired = regularize(A.rows @ sigma.matrix @ A.rows.T)
    except IrreparableCovarianceError:
        if not np.all(ens.vectors == ens.original.estimates):
            raise
        # every replicate reproduces the original: nothing to compare against
        diag["regularized"] = False
        diag["degenerate"] = True
        return TestResult(0.0, A.d, 1.0, 1.0, "permutation", estimator, lam, seed, alpha,
                          ens.original, sigma, diag)
    diag["regularized"] = fired
    Minv = np.linalg.inv(M)
    ts = ens.n_eff * _quadratic_forms((A.rows @ ens.original.estimates)[None, :], Minv)[0]
    ts_b = ens.n_eff * _quadratic_forms(ens.vectors @ A.rows.T, Minv)
    hits = int(np.sum(ts_b >= ts))
    p_block = (1 + hits) / (B + 1) if add_one else hits / B
    return TestResult(
        statistic=float(ts),
        d=A.d,
        p_asymptotic=asymptotic_pvalue(ts, A.d),
        p_resampling=float(p_block),
        method="permutation",
        estimator=estimator,
        lam=lam,
        seed=seed,
        alpha=alpha,
        estimates=ens.original,
        covariance=sigma,
        diagnostics=diag,
    )
