"""Gaussian random fields with geometric anisotropy, and outlier contamination.

The field has a spherical variogram in the anisotropic distance
``|T R h|``, where ``R`` rotates clockwise by ``theta`` and
``T = diag(1, 1/b)``. It is simulated exactly through a Cholesky factor of
its covariance ``C(h) = beta - gamma(h)``.
"""

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DataError, FactorizationError, SizeGuardError
from .lattice import Grid

DEFAULT_MAX_GRID = 4096
_JITTER = 1e-10
_JITTER_RETRIES = 3

CONTAMINATION_KINDS = ("isolated", "block")
BLOCK_SHAPES = ("random", "square", "elongated")
_ASPECT_RANGE = {"random": (1.0, 8.0), "elongated": (4.0, 8.0), "square": (1.0, 1.0)}


@dataclass(frozen=True)
class AnisoModel:
    theta: float = 0.0
    b: float = 1.0
    r: float = 5.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.b >= 1.0:
            raise DataError(f"anisotropy ratio b must be >= 1, got {self.b}")
        if not self.r > 0.0:
            raise DataError(f"range r must be positive, got {self.r}")
        if not self.beta > 0.0:
            raise DataError(f"sill beta must be positive, got {self.beta}")
        if not 0.0 <= self.theta < math.pi:
            raise DataError(f"theta must lie in [0, pi), got {self.theta}")


@dataclass(frozen=True)
class ContaminationSpec:
    kind: str
    epsilon: float
    mu0: float = 5.0
    sigma0: float = 1.0
    block_shape: str = "random"

    def __post_init__(self):
        if self.kind not in CONTAMINATION_KINDS:
            raise DataError(f"contamination kind must be one of {CONTAMINATION_KINDS}, got {self.kind!r}")
        if not 0.0 < self.epsilon < 0.5:
            raise DataError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if not self.sigma0 >= 0.0:
            raise DataError(f"sigma0 must be non-negative, got {self.sigma0}")
        if self.block_shape not in BLOCK_SHAPES:
            raise DataError(f"block shape must be one of {BLOCK_SHAPES}, got {self.block_shape!r}")

    def count(self, n):
        """Number of contaminated cells, ``ceil(epsilon * n)``."""
        c = math.ceil(self.epsilon * n - 1e-9)
        if c < 1:
            raise DataError(f"epsilon={self.epsilon} contaminates no cell of {n}")
        return c


def spherical_gamma(dist, r, beta=1.0):
    """Spherical semivariogram; works elementwise on arrays."""
    d = np.asarray(dist, dtype=float)
    t = np.minimum(d / r, 1.0)
    out = beta * (1.5 * t - 0.5 * t**3)
    return float(out) if out.ndim == 0 else out


def rotation_matrix(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def aniso_distance(h, theta, b):
    """``|T R h|`` for lag ``h`` (a pair or an ``(m, 2)`` array)."""
    h = np.asarray(h, dtype=float)
    v = h @ rotation_matrix(theta).T
    v = v * np.array([1.0, 1.0 / b])
    out = np.sqrt((v * v).sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def max_grid_cells():
    raw = os.environ.get("LATISO_MAX_GRID")
    if raw is None:
        return DEFAULT_MAX_GRID
    try:
        return int(raw)
    except ValueError as exc:
        raise DataError(f"LATISO_MAX_GRID must be an integer, got {raw!r}") from exc


def _coords(rows, cols):
    y, x = np.divmod(np.arange(rows * cols), cols)
    return np.column_stack([x, y]).astype(float)


def covariance_matrix(rows, cols, model):
    """Covariance of the field over all cells, ordered ``i = y * cols + x``."""
    n = rows * cols
    if n > max_grid_cells():
        raise SizeGuardError(f"{rows}x{cols} = {n} cells exceeds the limit {max_grid_cells()} (LATISO_MAX_GRID)")
    s = _coords(rows, cols)
    diff = (s[:, None, :] - s[None, :, :]).reshape(-1, 2)
    dist = aniso_distance(diff, model.theta, model.b).reshape(n, n)
    C = model.beta - spherical_gamma(dist, model.r, model.beta)
    return 0.5 * (C + C.T)


@lru_cache(maxsize=16)
def _cholesky(rows, cols, model):
    C = covariance_matrix(rows, cols, model)
    jitter = _JITTER * model.beta
    for _ in range(_JITTER_RETRIES + 1):
        try:
            L = np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
            L.setflags(write=False)
            return L
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError(f"covariance of {rows}x{cols} grid is not positive definite even with jitter")


def simulate_grf(rows, cols, model, seed):
    """Zero-mean Gaussian field on a ``rows x cols`` lattice.

    ``seed`` may be an integer, a ``SeedSequence`` or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    L = _cholesky(int(rows), int(cols), model)
    z = rng.standard_normal(rows * cols)
    return Grid((L @ z).reshape(rows, cols))


def contaminate_isolated(grid, spec, rng):
    """Replace ``ceil(epsilon * n)`` uniformly chosen cells with N(mu0, sigma0^2) draws."""
    n = grid.rows * grid.cols
    m = spec.count(n)
    idx = rng.choice(n, size=m, replace=False)
    v = grid.values.copy().reshape(-1)
    v[idx] = rng.normal(spec.mu0, spec.sigma0, size=m)
    return Grid(v.reshape(grid.shape))


def block_mask(shape, spec, rng):
    """Boolean mask of the contaminated rectangle.

    The rectangle has area ``ceil(epsilon * n)``: a short side ``S`` and a
    long side ``L`` with ``L / S`` near a drawn aspect ratio, the last line
    along the long side only partially filled. It is centred on a uniformly
    drawn cell and shifted inwards where it would cross the grid edge.
    """
    rows, cols = shape
    n = rows * cols
    area = spec.count(n)
    if area > n / 2:
        raise DataError(f"block of {area} cells exceeds half of the {rows}x{cols} grid")
    cy, cx = int(rng.integers(rows)), int(rng.integers(cols))
    lo, hi = _ASPECT_RANGE[spec.block_shape]
    aspect = math.exp(rng.uniform(math.log(lo), math.log(hi))) if hi > lo else lo
    vertical = bool(rng.integers(2))
    long_max = rows if vertical else cols
    short_max = cols if vertical else rows
    if spec.block_shape == "square":
        S = L = math.ceil(math.sqrt(area))
    else:
        S = max(1, math.floor(math.sqrt(area / aspect)))
        L = math.ceil(area / S)
    if L > long_max:
        L = long_max
        S = math.ceil(area / L)
    S = min(S, short_max)
    h, w = (L, S) if vertical else (S, L)
    y0 = min(max(cy - (h - 1) // 2, 0), rows - h)
    x0 = min(max(cx - (w - 1) // 2, 0), cols - w)
    # fill line by line along the long side until the area is reached
    lines = np.zeros((S, L), dtype=bool)
    lines.reshape(-1)[:area] = True
    mask = np.zeros(shape, dtype=bool)
    mask[y0 : y0 + h, x0 : x0 + w] = lines.T if vertical else lines
    return mask


def contaminate_block(grid, spec, rng):
    """Replace a rectangle of ``ceil(epsilon * n)`` cells with N(mu0, sigma0^2) draws."""
    mask = block_mask(grid.shape, spec, rng)
    v = grid.values.copy()
    v[mask] = rng.normal(spec.mu0, spec.sigma0, size=int(mask.sum()))
    return Grid(v)


def contaminate(grid, spec, rng):
    if spec is None:
        return grid
    if spec.kind == "isolated":
        return contaminate_isolated(grid, spec, rng)
    return contaminate_block(grid, spec, rng)
