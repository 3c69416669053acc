import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latiso.errors import (
    DataError,
    DegenerateRestrictionError,
    InvalidBlockSizeError,
    NonSquareBlockError,
    ZeroScaleError,
)
from latiso.lattice import (
    LAMBDA_1,
    LAMBDA_2,
    LAMBDA_3,
    Block,
    Grid,
    Lag,
    LagSet,
    block_coverage,
    excluded_by_blocks,
    joint_pair_set,
    pair_set,
    parse_lags,
    partition_blocks,
    rotate_block_90,
    standardize_by_mad,
    subsample_windows,
)

from conftest import random_grid


def full(n):
    return Grid(np.arange(n * n, dtype=float).reshape(n, n))


class TestGrid:
    def test_north_first_round_trip(self):
        g = Grid.from_rows_north_first([[0, 1], [2, 3]])
        # top row is the largest y
        assert g.values[1].tolist() == [0, 1]
        assert g.rows_north_first().tolist() == [[0, 1], [2, 3]]

    def test_values_are_read_only(self):
        g = full(3)
        with pytest.raises(ValueError):
            g.values[0, 0] = 5

    @pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((0, 2)), [[1.0, np.inf]]])
    def test_rejects_bad_shapes_and_inf(self, bad):
        with pytest.raises(DataError):
            Grid(bad)

    def test_equality_with_missing(self):
        v = [[1.0, np.nan], [2.0, 3.0]]
        assert Grid(v) == Grid(v)
        assert Grid(v).n_observed == 3


class TestLagSet:
    def test_presets(self):
        assert len(LAMBDA_1) == 2 and len(LAMBDA_2) == 4 and len(LAMBDA_3) == 8
        assert LAMBDA_2.groups == ((0, 1), (2, 3))
        assert LAMBDA_3.groups == ((0, 1), (2, 3), (4, 5, 6, 7))

    def test_negative_duplicate_dropped_with_warning(self):
        with pytest.warns(UserWarning, match="dropping lag"):
            lam = LagSet([(1, 0), (-1, 0), (0, 1)])
        assert list(lam) == [Lag(1, 0), Lag(0, 1)]

    def test_zero_lag_rejected(self):
        with pytest.raises(DataError):
            LagSet([(0, 0)])

    def test_direction_groups(self):
        lam = LagSet([(1, 0), (2, 0), (0, 1), (-3, 0)])
        groups = dict(lam.direction_groups())
        assert groups[Lag(1, 0)] == [0, 1, 3]
        assert groups[Lag(0, 1)] == [2]

    def test_parse(self):
        assert parse_lags("L2") == LAMBDA_2
        assert list(parse_lags("custom:1,0;0,1;2,2")) == [Lag(1, 0), Lag(0, 1), Lag(2, 2)]
        for bad in ("L4", "custom:1", "custom:a,b"):
            with pytest.raises(DataError):
                parse_lags(bad)


class TestPairSets:
    def test_full_grid_counts(self):
        g = full(3)
        assert len(pair_set(g, (1, 0))) == 6
        assert len(pair_set(g, (1, 1))) == 4

    def test_missing_centre(self):
        v = np.ones((3, 3))
        v[1, 1] = np.nan
        assert len(pair_set(Grid(v), (1, 0))) == 4

    def test_row_major_order(self):
        locs = pair_set(full(3), (1, 0))
        assert [tuple(s) for s in locs] == [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]

    def test_joint_small(self):
        locs = joint_pair_set(full(3), LAMBDA_1)
        assert sorted(map(tuple, locs)) == [(0, 0), (0, 1), (1, 0), (1, 1)]

    def test_joint_lambda2_on_24(self):
        locs = joint_pair_set(full(24), LAMBDA_2)
        assert len(locs) == 506
        assert locs[:, 0].min() == 0 and locs[:, 0].max() == 22
        assert locs[:, 1].min() == 1 and locs[:, 1].max() == 22

    def test_joint_single_lag_equals_pair_set(self, rng):
        g = random_grid(rng, 7, 9, missing=0.2)
        np.testing.assert_array_equal(joint_pair_set(g, LagSet([(1, 2)])), pair_set(g, (1, 2)))

    def test_joint_empty_is_error(self):
        with pytest.raises(DegenerateRestrictionError):
            joint_pair_set(Grid([[1.0, np.nan], [np.nan, 2.0]]), LAMBDA_1)

    def test_lag_outside_grid(self):
        with pytest.raises(DataError):
            pair_set(full(3), (3, 0))

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        rows=st.integers(2, 8),
        cols=st.integers(2, 8),
        dx=st.integers(-1, 1),
        dy=st.integers(0, 1),
    )
    def test_negated_lag_same_squared_differences(self, seed, rows, cols, dx, dy):
        if (dx, dy) == (0, 0):
            return
        g = random_grid(np.random.default_rng(seed), rows, cols, missing=0.15)
        v = g.values

        def sq(h):
            locs = pair_set(g, h)
            return np.sort([(v[y, x] - v[y + h[1], x + h[0]]) ** 2 for x, y in locs])

        np.testing.assert_array_equal(sq((dx, dy)), sq((-dx, -dy)))

    def test_joint_not_larger_than_any_pair_set(self, rng):
        g = random_grid(rng, 10, 10, missing=0.1)
        n_joint = len(joint_pair_set(g, LAMBDA_3))
        assert n_joint <= min(len(pair_set(g, h)) for h in LAMBDA_3)


class TestBlocks:
    def test_counts(self):
        assert len(partition_blocks(full(24), 6)) == 16
        assert len(partition_blocks(full(40), 8)) == 25

    def test_remainder_warns(self):
        g = full(25)
        with pytest.warns(UserWarning, match="outside the blocks"):
            blocks = partition_blocks(g, 6)
        assert len(blocks) == 16
        assert excluded_by_blocks(g, blocks) == (1, 1)
        # the excluded row is the southern one and the excluded column the eastern one
        label = block_coverage(g.shape, blocks)
        assert (label[0] == -1).all() and (label[:, -1] == -1).all()

    def test_tiles_disjoint_and_complete(self):
        g = full(12)
        blocks = partition_blocks(g, 4)
        label = block_coverage(g.shape, blocks)
        assert (label >= 0).all()
        assert np.bincount(label.ravel()).tolist() == [16] * 9

    @pytest.mark.parametrize("side", [1, 13])
    def test_invalid_side(self, side):
        with pytest.raises(InvalidBlockSizeError):
            partition_blocks(full(12), side)


class TestWindows:
    def test_counts(self):
        assert len(subsample_windows(full(24), 5)) == 400
        assert len(subsample_windows(full(6), 6)) == 1

    def test_invalid(self):
        with pytest.raises(InvalidBlockSizeError):
            subsample_windows(full(6), 7)


class TestRotation:
    def test_two_by_two(self):
        g = Grid.from_rows_north_first([[1.0, 2.0], [3.0, 4.0]])  # [[a, b], [c, d]]
        out = rotate_block_90(g, partition_blocks(g, 2)[0])
        assert out.rows_north_first().tolist() == [[3.0, 1.0], [4.0, 2.0]]

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), side=st.integers(2, 5), nb=st.integers(1, 3))
    def test_order_four(self, seed, side, nb):
        g = random_grid(np.random.default_rng(seed), side * nb, side * nb, missing=0.2)
        for b in partition_blocks(g, side):
            out = g
            for _ in range(4):
                out = rotate_block_90(out, b)
            assert out == g

    def test_only_block_changes_and_missing_moves(self):
        v = np.arange(16, dtype=float).reshape(4, 4)
        v[3, 0] = np.nan  # north-west corner
        g = Grid(v)
        b = partition_blocks(g, 2)[0]  # north-west block
        out = rotate_block_90(g, b)
        # clockwise: the north-west cell moves to the north-east cell of the block
        assert np.isnan(out.values[3, 1]) and not np.isnan(out.values[3, 0])
        np.testing.assert_array_equal(out.values[:2], g.values[:2])
        np.testing.assert_array_equal(out.values[:, 2:], g.values[:, 2:])

    def test_non_square_block(self):
        with pytest.raises(NonSquareBlockError):
            rotate_block_90(full(4), Block(3, 3, 2))


class TestMadStandardize:
    def test_hand_value(self):
        out, scale = standardize_by_mad(Grid([[1.0, 2.0, 3.0, 4.0, 5.0]]))
        assert scale == pytest.approx(1.4826)
        assert out.values[0, 0] == pytest.approx(1 / 1.4826)

    def test_constant(self):
        with pytest.raises(ZeroScaleError):
            standardize_by_mad(Grid(np.ones((3, 3))))

    def test_idempotent(self, rng):
        g = random_grid(rng, 9, 9, missing=0.1)
        once, _ = standardize_by_mad(g)
        _, scale2 = standardize_by_mad(once)
        assert scale2 == pytest.approx(1.0, abs=1e-12)

    def test_quiet_on_clean_input(self, rng):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            standardize_by_mad(random_grid(rng, 5, 5))
