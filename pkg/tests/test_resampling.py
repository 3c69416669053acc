import numpy as np
import pytest

from latiso.errors import BlockTooSmallError, GridTooSmallError, SingularScatterError
from latiso.lattice import LAMBDA_1, LAMBDA_2, LAMBDA_3, Grid, LagSet, difference_field, partition_blocks
from latiso.resampling import (
    BlockSampleCache,
    SubsampleEnsemble,
    block_permute,
    check_blocks_for_lags,
    default_block_side,
    default_window_side,
    permutation_covariance,
    permutation_ensemble,
    robust_scatter,
    subsample_ensemble,
    subsampling_covariance,
)
from latiso.variogram import estimate_vector, within_blocks_mask

from conftest import random_grid


def ensemble(vectors, sizes, f_n):
    vectors = np.asarray(vectors, dtype=float)
    return SubsampleEnsemble(3, [], vectors, np.asarray(sizes), f_n, LagSet([(1, 0), (0, 1)]), "matheron", False)


class TestDefaults:
    @pytest.mark.parametrize("side, l", [(24, 5), (40, 6), (9, 3), (100, 10)])
    def test_window_side(self, side, l):
        assert default_window_side(side) == l

    def test_window_side_too_small(self):
        with pytest.raises(GridTooSmallError):
            default_window_side(8)

    @pytest.mark.parametrize("side, b", [(24, 6), (40, 8), (12, 3), (30, 8)])
    def test_block_side(self, side, b):
        assert default_block_side(side) == b


class TestSubsampling:
    def test_window_count_without_edge_correction(self, rng):
        ens = subsample_ensemble(random_grid(rng, 24, 24), LAMBDA_1, l=5, edge_correction=False)
        assert ens.k_n == 400
        assert ens.f_n == pytest.approx(1 - 25 / 576)
        assert ens.f_n == pytest.approx(0.95660, abs=1e-5)

    def test_edge_corrected_windows_lie_in_joint_set(self, rng):
        g = random_grid(rng, 24, 24)
        ens = subsample_ensemble(g, LAMBDA_2, l=5)
        # anchors for LAMBDA_2 need x <= 22 and 1 <= y <= 22
        assert ens.k_n == 19 * 18
        for x, y in ens.origins:
            assert ens.anchors[y : y + 5, x : x + 5].all()

    def test_window_vector_uses_anchors_with_outside_partners(self, rng):
        g = random_grid(rng, 12, 12)
        ens = subsample_ensemble(g, LAMBDA_1, l=3)
        x, y = ens.origins[0]
        v = g.values
        a = v[y : y + 3, x : x + 3]
        east = v[y : y + 3, x + 1 : x + 4]
        north = v[y + 1 : y + 4, x : x + 3]
        np.testing.assert_allclose(ens.vectors[0], [np.mean((a - east) ** 2), np.mean((a - north) ** 2)])

    def test_constant_grid_gives_zero_vectors(self):
        ens = subsample_ensemble(Grid(np.ones((12, 12))), LAMBDA_1, l=3)
        assert not ens.vectors.any()

    def test_robust_estimators_drop_degenerate_windows(self):
        v = np.random.default_rng(0).standard_normal((12, 12))
        v[:6, :6] = 1.0
        ens = subsample_ensemble(Grid(v), LAMBDA_1, "genton", l=3)
        assert ens.dropped > 0
        assert ens.k_n + ens.dropped <= 100

    def test_hand_computed_covariance(self):
        vecs = [[1.0, 2.0], [3.0, 1.0], [2.0, 6.0]]
        sizes = [4, 5, 6]
        f_n = 0.8
        mean = [2.0, 3.0]
        want = np.zeros((2, 2))
        for v, s in zip(vecs, sizes):
            d = np.subtract(v, mean)
            want += s * np.outer(d, d)
        want /= 3 * f_n
        # written out: weighted sums of deviations (-1,-1), (1,-2), (0,3)
        hand = np.array([[(4 * 1 + 5 * 1 + 0) / 2.4, (4 * 1 + 5 * -2 + 0) / 2.4],
                         [(4 * 1 + 5 * -2 + 0) / 2.4, (4 * 1 + 5 * 4 + 6 * 9) / 2.4]])
        got = subsampling_covariance(ensemble(vecs * 2, sizes * 2, f_n), robust=False).matrix
        # duplicating every vector doubles the sum and the count
        np.testing.assert_allclose(got, hand, atol=1e-12)
        np.testing.assert_allclose(want, hand, atol=1e-12)
        np.testing.assert_allclose(subsampling_covariance(ensemble(vecs, sizes, f_n), robust=False).matrix, hand, atol=1e-12)
        np.testing.assert_allclose(
            subsampling_covariance(ensemble(vecs + [[2.0, 3.0]], sizes + [4], f_n), robust=False).matrix * 4,
            hand * 3,
            atol=1e-12,
        )

    def test_identical_windows_give_zero(self):
        M = subsampling_covariance(ensemble([[1.0, 2.0]] * 6, [9] * 6, 0.9), robust=False).matrix
        assert not M.any()

    def test_classical_is_symmetric_psd(self, rng):
        ens = subsample_ensemble(random_grid(rng, 15, 15), LAMBDA_3, l=4, edge_correction=False)
        M = subsampling_covariance(ens, robust=False).matrix
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-12

    def test_robust_scaling(self, rng):
        ens = subsample_ensemble(random_grid(rng, 16, 16), LAMBDA_2, l=4)
        cov = subsampling_covariance(ens, robust=True, rng=np.random.default_rng(0))
        S, _ = robust_scatter(ens.vectors, np.random.default_rng(0))
        np.testing.assert_allclose(cov.matrix, S * ens.sizes.mean() / ens.f_n)


class TestBlockPermute:
    def test_zero_mask_is_identity(self, rng):
        g = random_grid(rng, 12, 12)
        blocks = partition_blocks(g, 4)
        out, _ = block_permute(g, blocks, mask=np.zeros(len(blocks), bool))
        assert out == g

    def test_four_rotations(self, rng):
        g = random_grid(rng, 12, 12, missing=0.1)
        blocks = partition_blocks(g, 4)
        out = g
        for _ in range(4):
            out, _ = block_permute(out, blocks, mask=np.ones(len(blocks), bool))
        assert out == g

    def test_same_multiset(self, rng):
        g = random_grid(rng, 12, 12)
        out, mask = block_permute(g, partition_blocks(g, 3), rng)
        assert mask.dtype == bool and mask.shape == (16,)
        np.testing.assert_array_equal(np.sort(out.values.ravel()), np.sort(g.values.ravel()))

    def test_rotated_pairs_are_original_pairs_at_turned_lag(self, rng):
        g = random_grid(rng, 8, 8, missing=0.1)
        blocks = partition_blocks(g, 4)
        mask = np.array([True, False, True, True])
        out, _ = block_permute(g, blocks, mask=mask)

        def within(grid, block, h):
            ys, xs = block.slices
            sub = grid.values[ys, xs]
            vals = []
            for y in range(4):
                for x in range(4):
                    if 0 <= x + h.dx < 4 and 0 <= y + h.dy < 4:
                        d = sub[y, x] - sub[y + h.dy, x + h.dx]
                        if not np.isnan(d):
                            vals.append(d * d)
            return vals

        for h in LAMBDA_3:
            got = sorted(v for b in blocks for v in within(out, b, h))
            want = sorted(
                v for b, m in zip(blocks, mask) for v in within(g, b, h.rotated_ccw() if m else h)
            )
            np.testing.assert_allclose(got, want, rtol=0, atol=0)


class TestPermutationEnsemble:
    def test_shape(self, rng):
        g = random_grid(rng, 24, 24)
        ens = permutation_ensemble(g, LAMBDA_2, "matheron", partition_blocks(g, 6), 1000, rng)
        assert ens.vectors.shape == (1000, 4) and ens.masks.shape == (1000, 16)
        assert ens.n_eff == 576

    def test_full_rotation_swaps_axes(self, rng):
        g = random_grid(rng, 12, 12)
        blocks = partition_blocks(g, 4)
        cache = BlockSampleCache(g, LAMBDA_2, "matheron", blocks)
        est, _ = cache.evaluate(np.array([[False] * 9, [True] * 9]), None, True)
        # (1,1) and (1,-1) also trade places under a quarter turn
        np.testing.assert_allclose(est[1], est[0][[1, 0, 3, 2]], rtol=1e-12)

    @pytest.mark.parametrize(
        "estimator, lam",
        [
            ("matheron", LAMBDA_3),
            ("genton", LAMBDA_2),
            ("mcd_diff", LAMBDA_2),
        ],
    )
    def test_fast_path_matches_explicit_permutation(self, estimator, lam):
        rng = np.random.default_rng(11)
        g = random_grid(rng, 12, 12, missing=0.05)
        blocks = partition_blocks(g, 4)
        cache = BlockSampleCache(g, lam, estimator, blocks)
        for _ in range(5):
            mask = rng.random(len(blocks)) < 0.5
            fast, counts = cache.evaluate(mask[None, :], np.random.default_rng(0), True)
            permuted, _ = block_permute(g, blocks, mask=mask)
            slow = estimate_vector(permuted, lam, estimator, "within_blocks", blocks, rng=np.random.default_rng(0))
            np.testing.assert_array_equal(counts[0], slow.pair_counts)
            np.testing.assert_allclose(fast[0], slow.estimates, rtol=1e-12)

    def test_fast_path_multi_lag_vectors(self):
        # FASTMCD depends on row order, so compare the W-vectors themselves
        rng = np.random.default_rng(11)
        g = random_grid(rng, 12, 12, missing=0.05)
        blocks = partition_blocks(g, 4)
        lam = LagSet([(1, 0), (0, 1), (2, 0), (0, 2)])
        cache = BlockSampleCache(g, lam, "mcd_diff", blocks)
        for _ in range(5):
            mask = rng.random(len(blocks)) < 0.5
            permuted, _ = block_permute(g, blocks, mask=mask)
            for idx, (p0, p1) in zip(cache.units, cache.samples):
                lags = [lam[i] for i in idx]
                W = np.concatenate([p1[j] if mask[j] else p0[j] for j in range(len(blocks))])
                m = within_blocks_mask(permuted.values, lags, blocks)
                W2 = np.column_stack([difference_field(permuted.values, h)[m] for h in lags])
                W2 = W2[~np.isnan(W2).any(axis=1)]
                np.testing.assert_array_equal(W[np.lexsort(W.T)], W2[np.lexsort(W2.T)])

    def test_zero_masks_reproduce_original(self, rng):
        g = random_grid(rng, 12, 12)
        blocks = partition_blocks(g, 4)
        cache = BlockSampleCache(g, LAMBDA_1, "matheron", blocks)
        est, _ = cache.evaluate(np.zeros((3, 9), bool), None, True)
        orig = estimate_vector(g, LAMBDA_1, "matheron", "within_blocks", blocks)
        for row in est:
            np.testing.assert_allclose(row, orig.estimates, rtol=1e-12)

    def test_block_too_small(self):
        with pytest.raises(BlockTooSmallError):
            check_blocks_for_lags(LAMBDA_3, 2)

    def test_covariance_scales_with_fourth_power(self, rng):
        g = random_grid(rng, 12, 12)
        blocks = partition_blocks(g, 4)
        a = permutation_ensemble(g, LAMBDA_2, "genton", blocks, 200, np.random.default_rng(1))
        b = permutation_ensemble(Grid(g.values * 2), LAMBDA_2, "genton", blocks, 200, np.random.default_rng(1))
        Sa = permutation_covariance(a, np.random.default_rng(2)).matrix
        Sb = permutation_covariance(b, np.random.default_rng(2)).matrix
        assert Sa.shape == (4, 4)
        np.testing.assert_array_equal(Sb, Sa * 16)
        np.testing.assert_array_equal(Sa, Sa.T)

    def test_identical_vectors_are_singular(self):
        with pytest.raises(SingularScatterError):
            robust_scatter(np.ones((20, 3)))
