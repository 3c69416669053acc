"""Grid data model, lag sets, pair sets, blocks and 90-degree block rotation.

Coordinates follow the map convention: ``x`` is the column, ``y`` the row,
and ``y`` grows northwards. ``Grid.values`` is stored with ``values[y, x]``,
so row 0 of the array is the southern edge; CSV files are written and read
north-first (see :mod:`latiso.io`).
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DataError,
    DegenerateRestrictionError,
    InvalidBlockSizeError,
    NonSquareBlockError,
    ZeroScaleError,
)
from .robust.scale import mad


@dataclass(frozen=True, eq=False)
class Grid:
    """Rectangular lattice of real values; NaN marks a missing cell."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"grid values must be a non-empty 2-d array, got shape {v.shape}")
        if np.isinf(v).any():
            raise DataError("grid contains infinite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_rows_north_first(cls, rows):
        """Build a grid from rows listed top (largest y) to bottom."""
        return cls(np.asarray(rows, dtype=float)[::-1])

    def rows_north_first(self):
        return self.values[::-1]

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    @property
    def observed(self):
        return ~np.isnan(self.values)

    @property
    def n_observed(self):
        return int(self.observed.sum())

    def with_values(self, values):
        return Grid(values)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values, equal_nan=True)

    __hash__ = None


class Lag(NamedTuple):
    dx: int
    dy: int

    @property
    def norm2(self):
        return self.dx * self.dx + self.dy * self.dy

    @property
    def norm(self):
        return math.sqrt(self.norm2)

    def __neg__(self):
        return Lag(-self.dx, -self.dy)

    def rotated_ccw(self):
        """Lag turned 90 degrees counter-clockwise."""
        return Lag(-self.dy, self.dx)

    def canonical(self):
        """Representative of {h, -h}: dx > 0, or dx == 0 and dy > 0."""
        if self.dx > 0 or (self.dx == 0 and self.dy > 0):
            return self
        return -self

    def direction(self):
        """Primitive direction vector (canonical sign) and the integer multiple."""
        g = math.gcd(abs(self.dx), abs(self.dy))
        c = self.canonical()
        return Lag(c.dx // g, c.dy // g), g

    def __str__(self):
        return f"({self.dx},{self.dy})"


class LagSet:
    """Ordered lags with their equal-norm groups.

    If both ``h`` and ``-h`` are given, the later one is dropped with a
    warning; their difference sets coincide.
    """

    def __init__(self, lags):
        kept = []
        seen = set()
        for h in lags:
            h = Lag(int(h[0]), int(h[1]))
            if h == (0, 0):
                raise DataError("the zero lag is not allowed")
            key = h.canonical()
            if key in seen:
                warnings.warn(f"dropping lag {h}: it or its negative is already in the set", stacklevel=2)
                continue
            seen.add(key)
            kept.append(h)
        if not kept:
            raise DataError("lag set is empty")
        self.lags = tuple(kept)
        groups = {}
        for i, h in enumerate(self.lags):
            groups.setdefault(h.norm2, []).append(i)
        self.groups = tuple(tuple(g) for g in groups.values())

    def __len__(self):
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)

    def __getitem__(self, i):
        return self.lags[i]

    def __eq__(self, other):
        return isinstance(other, LagSet) and self.lags == other.lags

    def __hash__(self):
        return hash(self.lags)

    def __repr__(self):
        return f"LagSet([{', '.join(map(str, self.lags))}])"

    @property
    def max_abs_offset(self):
        return max(max(abs(h.dx), abs(h.dy)) for h in self.lags)

    def direction_groups(self):
        """Lags grouped by primitive direction, each group sorted by multiple.

        Returns a list of ``(direction, [lag indices])``.
        """
        groups = {}
        for i, h in enumerate(self.lags):
            d, m = h.direction()
            groups.setdefault(d, []).append((m, i))
        return [(d, [i for _, i in sorted(members)]) for d, members in groups.items()]


LAMBDA_1 = LagSet([(1, 0), (0, 1)])
LAMBDA_2 = LagSet([(1, 0), (0, 1), (1, 1), (1, -1)])
LAMBDA_3 = LagSet([(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (-1, 2), (1, 2), (-2, 1)])
LAG_PRESETS = {"L1": LAMBDA_1, "L2": LAMBDA_2, "L3": LAMBDA_3}


def parse_lags(spec):
    """Parse ``L1``/``L2``/``L3`` or ``custom:dx,dy;dx,dy;...``."""
    if spec in LAG_PRESETS:
        return LAG_PRESETS[spec]
    if spec.startswith("custom:"):
        body = spec[len("custom:") :]
        try:
            lags = [tuple(int(t) for t in item.split(",")) for item in body.split(";") if item.strip()]
        except ValueError as exc:
            raise DataError(f"cannot parse lag list {body!r}") from exc
        if any(len(h) != 2 for h in lags):
            raise DataError(f"each lag needs two integers: {body!r}")
        return LagSet(lags)
    raise DataError(f"unknown lag set {spec!r}; use L1, L2, L3 or custom:dx,dy;...")


# ---------------------------------------------------------------------------
# pair sets
# ---------------------------------------------------------------------------

def _check_lag(rows, cols, h):
    if abs(h.dx) >= cols or abs(h.dy) >= rows:
        raise DataError(f"lag {h} exceeds the {rows}x{cols} grid")


def anchor_slices(rows, cols, h):
    """Slices (anchor, target) such that ``v[anchor]`` and ``v[target]`` pair up at lag ``h``."""
    dx, dy = h
    ya, xa = slice(max(0, -dy), rows - max(0, dy)), slice(max(0, -dx), cols - max(0, dx))
    yt, xt = slice(ya.start + dy, ya.stop + dy), slice(xa.start + dx, xa.stop + dx)
    return (ya, xa), (yt, xt)


def difference_field(values, h):
    """``Z(s) - Z(s+h)`` at every anchor ``s``; NaN where the pair is incomplete."""
    rows, cols = values.shape
    out = np.full(values.shape, np.nan)
    if abs(h[0]) >= cols or abs(h[1]) >= rows:
        return out
    a, t = anchor_slices(rows, cols, h)
    out[a] = values[a] - values[t]
    return out


def pair_mask(values, h):
    return ~np.isnan(difference_field(values, h))


def _mask_to_locations(mask):
    ys, xs = np.nonzero(mask)
    return np.column_stack([xs, ys])


def pair_set(grid, h):
    """All anchors ``s = (x, y)`` with ``s`` and ``s + h`` observed, ordered by (y, x)."""
    h = Lag(*h)
    _check_lag(grid.rows, grid.cols, h)
    return _mask_to_locations(pair_mask(grid.values, h))


def joint_pair_mask(values, lags):
    mask = np.ones(values.shape, dtype=bool)
    for h in lags:
        mask &= pair_mask(values, h)
    return mask


def joint_pair_set(grid, lam):
    """Anchors at which every lag of ``lam`` can be formed."""
    for h in lam:
        _check_lag(grid.rows, grid.cols, Lag(*h))
    mask = joint_pair_mask(grid.values, lam)
    if not mask.any():
        raise DegenerateRestrictionError("no location supports every lag of the set")
    return _mask_to_locations(mask)


# ---------------------------------------------------------------------------
# blocks and windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    """Square block; ``(x0, y0)`` is its north-west (top-left) cell."""

    x0: int
    y0: int
    side: int
    rotated: bool = False

    @property
    def slices(self):
        return slice(self.y0 - self.side + 1, self.y0 + 1), slice(self.x0, self.x0 + self.side)


def partition_blocks(grid, side):
    """Tile the grid from its top-left corner with non-overlapping ``side x side`` blocks.

    Rows at the southern edge and columns at the eastern edge that do not fill
    a whole block are left out, with a warning.
    """
    if side < 2:
        raise InvalidBlockSizeError(f"block side must be at least 2, got {side}")
    if side > min(grid.rows, grid.cols):
        raise InvalidBlockSizeError(f"block side {side} exceeds the {grid.rows}x{grid.cols} grid")
    nby, nbx = grid.rows // side, grid.cols // side
    extra_rows, extra_cols = grid.rows - nby * side, grid.cols - nbx * side
    if extra_rows or extra_cols:
        warnings.warn(
            f"block side {side} leaves {extra_rows} row(s) and {extra_cols} column(s) outside the blocks",
            stacklevel=2,
        )
    top = grid.rows - 1
    return [Block(j * side, top - i * side, side) for i in range(nby) for j in range(nbx)]


def excluded_by_blocks(grid, blocks):
    """Number of rows and columns outside the block tiling."""
    if not blocks:
        return grid.rows, grid.cols
    side = blocks[0].side
    return grid.rows - (grid.rows // side) * side, grid.cols - (grid.cols // side) * side


def block_coverage(shape, blocks):
    """Integer map giving the block index of every cell (-1 if uncovered)."""
    label = np.full(shape, -1, dtype=np.int64)
    for i, b in enumerate(blocks):
        label[b.slices] = i
    return label


def subsample_windows(grid, l):
    """Origins ``(x, y)`` (south-west corner) of all overlapping ``l x l`` windows.

    Windows are listed row by row starting at the north-west corner.
    """
    if l < 2 or l > min(grid.rows, grid.cols):
        raise InvalidBlockSizeError(f"window side must lie in [2, {min(grid.rows, grid.cols)}], got {l}")
    return [
        (x, y)
        for y in range(grid.rows - l, -1, -1)
        for x in range(grid.cols - l + 1)
    ]


def window_values(grid, origin, l):
    x, y = origin
    return grid.values[y : y + l, x : x + l]


def rotate_cw(block_values):
    """Rotate a square array stored south-first by 90 degrees clockwise (as seen on a map)."""
    return np.rot90(block_values, 1)


def rotate_block_90(grid, block):
    """Return a copy of ``grid`` with ``block`` rotated 90 degrees clockwise."""
    ys, xs = block.slices
    sub = grid.values[ys, xs]
    if sub.shape[0] != sub.shape[1] or sub.shape != (block.side, block.side):
        raise NonSquareBlockError(f"block {block} is not a square inside the grid")
    v = grid.values.copy()
    v[ys, xs] = rotate_cw(sub)
    return Grid(v)


def standardize_by_mad(grid):
    """Divide all observed values by their normal-consistent MAD."""
    obs = grid.values[grid.observed]
    if np.unique(obs).size < 2:
        raise ZeroScaleError("need at least two distinct observed values")
    scale = mad(obs)
    if scale == 0.0:
        raise ZeroScaleError("median absolute deviation is zero")
    return Grid(grid.values / scale), scale
