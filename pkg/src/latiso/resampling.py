"""Resampling engines: overlapping-window subsampling and block permutation.

Block permutation rotates each non-overlapping square block by 90 degrees
with probability 1/2 and re-estimates the variogram from within-block pairs
only. Because a rotated block's pairs at lag ``h`` are the original block's
pairs at ``h`` turned counter-clockwise, every block's difference sample is
computed once per orientation and each replicate just gathers the right
pieces (:class:`BlockSampleCache`).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    AllWindowsFailedError,
    BlockTooSmallError,
    DataError,
    GridTooSmallError,
    LatisoError,
    NonSquareBlockError,
    SingularScatterError,
    TooFewVectorsError,
    TooFewWeightedError,
)
from .lattice import Grid, LagSet, difference_field, joint_pair_mask, rotate_cw, subsample_windows
from .robust.mcd import consistency_factor, mcd_reweighted, reweight_cutoff, reweight_factor
from .robust.scale import QN_CONSTANT, qn_correction
from .variogram import (
    VariogramVector,
    canonical_estimator,
    estimate_vector,
    mcd_diff_correction,
    mcd_diff_from_vectors,
    vector_from_fields,
)

_RANK_RTOL = 1e-9


def default_window_side(side):
    """Subsampling window side ``round(sqrt(side))``, at least 3."""
    if side < 9:
        raise GridTooSmallError(f"subsampling needs a grid side of at least 9, got {side}")
    return max(3, int(round(math.sqrt(side))))


def default_block_side(side):
    """Block side for permutation: 6 for 24, 8 for 40, else ``round(side / 4)``."""
    return {24: 6, 40: 8}.get(side, max(2, int(round(side / 4))))


@dataclass
class CovarianceEstimate:
    matrix: np.ndarray
    source: str
    robust: bool = True
    rank: int = None
    scaling: float = 1.0

    def as_dict(self):
        return {
            "source": self.source,
            "robust": self.robust,
            "rank": self.rank,
            "scaling": self.scaling,
            "matrix": self.matrix.tolist(),
        }


def robust_scatter(V, rng=None):
    """Reweighted MCD scatter of the rows of ``V``.

    When the rows span a lower-dimensional affine subspace (for instance the
    Matheron replicates of a block permutation, whose paired components sum
    to a constant), the MCD is computed in subspace coordinates and mapped
    back. Returns ``(scatter, rank)``.
    """
    V = np.asarray(V, dtype=float)
    centered = V - V.mean(axis=0)
    if not np.any(centered):
        raise SingularScatterError("all vectors are identical")
    s, Vt = np.linalg.svd(centered, full_matrices=False)[1:]
    rank = int((s > _RANK_RTOL * s[0]).sum())
    if rank == V.shape[1]:
        return mcd_reweighted(V, rng=rng).scatter, rank
    basis = Vt[:rank]
    S_r = mcd_reweighted(centered @ basis.T, rng=rng).scatter
    return basis.T @ S_r @ basis, rank


# ---------------------------------------------------------------------------
# subsampling
# ---------------------------------------------------------------------------

@dataclass
class SubsampleEnsemble:
    window_side: int
    origins: list
    vectors: np.ndarray
    sizes: np.ndarray
    f_n: float
    lam: LagSet
    estimator: str
    edge_correction: bool
    dropped: int = 0
    anchors: np.ndarray = field(default=None, repr=False)

    @property
    def k_n(self):
        return self.vectors.shape[0]


def subsample_ensemble(grid, lam, estimator="matheron", l=None, rng=None, edge_correction=True, correction=True):
    """Variogram vectors of all overlapping ``l x l`` windows.

    With ``edge_correction`` the squared-difference process is restricted to
    the anchors at which every lag of ``lam`` can be formed on the whole
    grid: a window's estimate uses the anchors it contains, each with all
    its lags, even where the partner cell lies outside the window. Without
    it, a window only uses pairs lying entirely inside it.

    Windows on which the estimator fails or degenerates are dropped and
    counted in ``dropped``. ``sizes`` holds the observed cells per window.
    """
    estimator = canonical_estimator(estimator)
    if l is None:
        l = default_window_side(min(grid.rows, grid.cols))
    windows = subsample_windows(grid, l)
    values = grid.values
    anchors = None
    if edge_correction:
        fields = [difference_field(values, h) for h in lam]
        anchors = joint_pair_mask(values, lam)
    vectors, sizes, origins = [], [], []
    dropped = 0
    for x, y in windows:
        sl = (slice(y, y + l), slice(x, x + l))
        if edge_correction and not anchors[sl].all():
            continue
        try:
            if edge_correction:
                est, _, degenerate = vector_from_fields(
                    [f[sl] for f in fields], lam, estimator, anchors[sl], rng, correction
                )
            else:
                vv = estimate_vector(Grid(values[sl]), lam, estimator, "per_lag", rng=rng, correction=correction)
                est, degenerate = vv.estimates, vv.degenerate
        except LatisoError:
            dropped += 1
            continue
        if estimator != "matheron" and degenerate.any():
            dropped += 1
            continue
        vectors.append(est)
        sizes.append(int(np.count_nonzero(~np.isnan(values[sl]))))
        origins.append((x, y))
    if not vectors:
        raise AllWindowsFailedError(f"the estimator failed on every {l}x{l} window")
    f_n = 1.0 - l * l / grid.n_observed
    return SubsampleEnsemble(
        window_side=l,
        origins=origins,
        vectors=np.array(vectors),
        sizes=np.array(sizes, dtype=np.int64),
        f_n=f_n,
        lam=lam,
        estimator=estimator,
        edge_correction=edge_correction,
        dropped=dropped,
        anchors=anchors,
    )


def subsampling_covariance(ens, robust=True, rng=None):
    """Covariance of the variogram vector from the window ensemble.

    With ``robust=False`` this is the size-weighted outer-product average
    around the mean window vector, divided by ``k_n * f_n``. With
    ``robust=True`` the reweighted MCD scatter of the window vectors is scaled
    by the mean window size over ``f_n``.
    """
    G = ens.vectors
    k_n, m = G.shape
    # MCD needs more points than dimensions; the plain average only needs two
    need = m + 2 if robust else 2
    if k_n < need:
        raise DataError(f"need at least {need} windows for a {m}x{m} covariance, got {k_n}")
    if not robust:
        dev = G - G.mean(axis=0)
        M = (dev * ens.sizes[:, None]).T @ dev / (k_n * ens.f_n)
        M = 0.5 * (M + M.T)
        return CovarianceEstimate(M, "subsampling", robust=False, rank=int(np.linalg.matrix_rank(M)))
    S, rank = robust_scatter(G, rng)
    scaling = float(ens.sizes.mean()) / ens.f_n
    return CovarianceEstimate(S * scaling, "subsampling", robust=True, rank=rank, scaling=scaling)


# ---------------------------------------------------------------------------
# block permutation
# ---------------------------------------------------------------------------

def block_permute(grid, blocks, rng=None, mask=None):
    """Rotate each block clockwise with probability 1/2 (or as ``mask`` says)."""
    if mask is None:
        mask = rng.random(len(blocks)) < 0.5
    mask = np.asarray(mask, dtype=bool)
    v = grid.values.copy()
    for b, flip in zip(blocks, mask):
        ys, xs = b.slices
        sub = v[ys, xs]
        if sub.shape != (b.side, b.side):
            raise NonSquareBlockError(f"block {b} is not a square inside the grid")
        if flip:
            v[ys, xs] = rotate_cw(sub)
    return Grid(v), mask


def _pack(pieces):
    off = np.zeros(len(pieces) + 1, dtype=np.int64)
    off[1:] = np.cumsum([p.shape[0] for p in pieces])
    flat = np.concatenate(pieces) if pieces else np.empty(0)
    return flat, off


class BlockSampleCache:
    """Per-block difference samples of one grid in both block orientations.

    ``units`` follows the estimator: one unit per lag for Matheron and Genton,
    one per direction group for MCD.diff. For each unit and orientation the
    per-block samples are kept as a list of ``(n_b, p)`` arrays.
    """

    def __init__(self, grid, lam, estimator, blocks):
        self.lam = lam
        self.estimator = canonical_estimator(estimator)
        self.blocks = blocks
        if self.estimator == "mcd_diff":
            self.units = [idx for _, idx in lam.direction_groups()]
        else:
            self.units = [[i] for i in range(len(lam))]
        subs = []
        for b in blocks:
            ys, xs = b.slices
            sub = grid.values[ys, xs]
            if sub.shape != (b.side, b.side):
                raise NonSquareBlockError(f"block {b} is not a square inside the grid")
            subs.append((sub, rotate_cw(sub)))
        self.samples = []
        for idx in self.units:
            lags = [lam[i] for i in idx]
            per_orient = []
            for o in (0, 1):
                pieces = []
                for pair in subs:
                    values = pair[o]
                    mask = joint_pair_mask(values, lags)
                    W = np.column_stack([difference_field(values, h)[mask] for h in lags])
                    pieces.append(W)
                per_orient.append(pieces)
            self.samples.append(per_orient)
        self.n_eff = int(sum(np.count_nonzero(~np.isnan(pair[0])) for pair in subs))

    def evaluate(self, masks, rng=None, correction=True):
        """Variogram vectors (one row per mask) and pair counts."""
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        n_rep, m = masks.shape[0], len(self.lam)
        est = np.empty((n_rep, m))
        counts = np.empty((n_rep, m), dtype=np.int64)
        for idx, (p0, p1) in zip(self.units, self.samples):
            if self.estimator == "matheron":
                s0 = np.array([float(np.sum(w * w)) for w in p0])
                s1 = np.array([float(np.sum(w * w)) for w in p1])
                c0 = np.array([w.shape[0] for w in p0])
                c1 = np.array([w.shape[0] for w in p1])
                tot = np.where(masks, s1[None, :], s0[None, :]).sum(axis=1)
                cnt = np.where(masks, c1[None, :], c0[None, :]).sum(axis=1)
                if (cnt == 0).any():
                    raise DataError("a replicate has no within-block pairs for some lag")
                est[:, idx[0]] = tot / cnt
                counts[:, idx[0]] = cnt
            elif self.estimator == "genton":
                f0, o0 = _pack([w[:, 0] for w in p0])
                f1, o1 = _pack([w[:, 0] for w in p1])
                gaps, cnt = kernels.qn_gap_batch(f0, o0, f1, o1, masks)
                if (cnt < 2).any():
                    raise DataError("a replicate has fewer than two within-block pairs for some lag")
                est[:, idx[0]] = (QN_CONSTANT * qn_correction(cnt) * gaps) ** 2
                counts[:, idx[0]] = cnt
            elif len(idx) == 1:
                f0, o0 = _pack([w[:, 0] for w in p0])
                f1, o1 = _pack([w[:, 0] for w in p1])
                # a replicate mixes orientations block by block
                n_max = int(np.maximum(np.diff(o0), np.diff(o1)).sum())
                c_raw = np.array([consistency_factor(((n + 2) // 2) / n, 1) if n > 0 else 1.0 for n in range(n_max + 1)])
                var, cnt, status = kernels.umcd_batch(
                    f0, o0, f1, o1, masks, c_raw, reweight_cutoff(1), reweight_factor(1)
                )
                if (cnt < 3).any():
                    raise TooFewVectorsError("a replicate has fewer than three within-block pairs for some lag")
                if (status == kernels.UMCD_TOO_FEW).any():
                    raise TooFewWeightedError("fewer than two differences kept by reweighting")
                var = np.where(status == kernels.UMCD_DEGENERATE, 0.0, var)
                if correction:
                    factors = {int(n): mcd_diff_correction(int(n), 1) for n in np.unique(cnt)}
                    var = var * np.array([factors[int(n)] for n in cnt])
                est[:, idx[0]] = var
                counts[:, idx[0]] = cnt
            else:
                for r in range(n_rep):
                    W = np.concatenate([p1[j] if masks[r, j] else p0[j] for j in range(masks.shape[1])])
                    e, _ = mcd_diff_from_vectors(W, rng, correction)
                    est[r, idx] = e
                    counts[r, idx] = W.shape[0]
        return est, counts


@dataclass
class PermutationEnsemble:
    B: int
    block_side: int
    masks: np.ndarray
    vectors: np.ndarray
    original: VariogramVector
    n_eff: int
    blocks: list = field(repr=False, default=None)


def check_blocks_for_lags(lam, block_side):
    if block_side <= lam.max_abs_offset:
        raise BlockTooSmallError(
            f"block side {block_side} cannot host lags up to offset {lam.max_abs_offset}"
        )


def permutation_ensemble(grid, lam, estimator, blocks, B, rng, correction=True, rng_mcd=None):
    """Variogram vectors of ``B`` block-permuted copies of ``grid``.

    The original grid is evaluated with the same within-block restriction so
    that it is exchangeable with the replicates. Rotation masks are drawn
    from ``rng``; multi-lag MCD.diff fits draw from ``rng_mcd`` (default
    ``rng``).
    """
    if rng_mcd is None:
        rng_mcd = rng
    if B < 1:
        raise DataError("B must be positive")
    if not blocks:
        raise DataError("no blocks")
    side = blocks[0].side
    check_blocks_for_lags(lam, side)
    cache = BlockSampleCache(grid, lam, estimator, blocks)
    masks = rng.random((B, len(blocks))) < 0.5
    orig_est, orig_counts = cache.evaluate(np.zeros((1, len(blocks)), dtype=bool), rng_mcd, correction)
    vectors, _ = cache.evaluate(masks, rng_mcd, correction)
    original = VariogramVector(
        lam,
        orig_est[0],
        orig_counts[0],
        cache.estimator,
        "within_blocks",
        degenerate=(orig_est[0] == 0.0) if cache.estimator != "matheron" else None,
    )
    return PermutationEnsemble(B, side, masks, vectors, original, cache.n_eff, blocks)


def permutation_covariance(ens, rng=None):
    """Reweighted MCD scatter of the permuted vectors, scaled by the effective size."""
    m = ens.vectors.shape[1]
    if ens.vectors.shape[0] < m + 2:
        raise DataError(f"need at least {m + 2} permutations for a {m}x{m} covariance")
    S, rank = robust_scatter(ens.vectors, rng)
    return CovarianceEstimate(S * ens.n_eff, "permutation", robust=True, rank=rank, scaling=float(ens.n_eff))
