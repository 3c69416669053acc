"""Monte Carlo rejection-rate harness.

A *cell* fixes the field model, contamination, estimator, lag set and
resampling method. Replication ``i`` of every cell sees the same field for a
given master seed (common random numbers), so differences between cells are
not blurred by different draws. Results are collected in replication order,
which makes them independent of the number of worker processes.
"""

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError, DegenerateError
from .isotest import DEFAULT_ALPHA, permutation_test, subsampling_test
from .lattice import parse_lags
from .simulate import AnisoModel, ContaminationSpec, contaminate, simulate_grf

METHODS = ("subsampling", "permutation")
_FIELD_STREAM, _CONTAM_STREAM, _TEST_STREAM = 0, 1, 2


@dataclass(frozen=True)
class Cell:
    theta: float = 0.0
    b: float = 1.0
    r: float = 5.0
    estimator: str = "matheron"
    lags: str = "L1"
    method: str = "permutation"
    rows: int = 24
    cols: int = 24
    sill: float = 1.0
    B: int = 1000
    alpha: float = DEFAULT_ALPHA
    block_side: int = None
    window_side: int = None
    contamination: ContaminationSpec = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def model(self):
        return AnisoModel(self.theta, self.b, self.r, self.sill)


@dataclass
class CellResult:
    cell: Cell
    pvalues: np.ndarray
    failures: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def replications(self):
        return self.pvalues.shape[0]

    @property
    def rate(self):
        """Rejection rate over replications; failed tests count as non-rejections."""
        return float(np.mean(self.pvalues <= self.cell.alpha))

    @property
    def se(self):
        p = self.rate
        return math.sqrt(p * (1.0 - p) / self.replications)


def _seed(master, *key):
    return np.random.SeedSequence([int(master), *key])


def simulate_replication(cell, master_seed, rep):
    """Field (and contamination) of replication ``rep``; shared by all cells."""
    grid = simulate_grf(cell.rows, cell.cols, cell.model, np.random.default_rng(_seed(master_seed, _FIELD_STREAM, rep)))
    if cell.contamination is not None:
        grid = contaminate(grid, cell.contamination, np.random.default_rng(_seed(master_seed, _CONTAM_STREAM, rep)))
    return grid


def run_replication(cell, master_seed, rep):
    """p-value of one replication; NaN if the test is degenerate."""
    grid = simulate_replication(cell, master_seed, rep)
    test_seed = int(_seed(master_seed, _TEST_STREAM, rep).generate_state(1)[0])
    lam = parse_lags(cell.lags)
    try:
        if cell.method == "subsampling":
            res = subsampling_test(grid, lam, cell.estimator, cell.window_side, test_seed, alpha=cell.alpha)
        else:
            res = permutation_test(grid, lam, cell.estimator, cell.block_side, cell.B, test_seed, alpha=cell.alpha)
    except DegenerateError:
        return float("nan")
    return res.p_resampling


def _run_chunk(args):
    cell, master_seed, reps = args
    return [run_replication(cell, master_seed, r) for r in reps]


def run_cell(cell, replications, master_seed, workers=1, chunk=10):
    """Run ``replications`` seeded repetitions of one cell."""
    reps = list(range(replications))
    chunks = [(cell, master_seed, reps[i : i + chunk]) for i in range(0, replications, chunk)]
    if workers <= 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, chunks))
    p = np.array([v for part in parts for v in part])
    failures = int(np.isnan(p).sum())
    return CellResult(cell, np.where(np.isnan(p), 1.0, p), failures)


# ---------------------------------------------------------------------------
# benchmark configuration and table
# ---------------------------------------------------------------------------

@dataclass
class BenchmarkConfig:
    rows: int = 24
    cols: int = 24
    models: list = field(default_factory=lambda: [{"theta": 0.0, "b": 1.0}])
    ranges: list = field(default_factory=lambda: [5.0])
    sill: float = 1.0
    estimators: list = field(default_factory=lambda: ["matheron"])
    lags: list = field(default_factory=lambda: ["L1"])
    methods: list = field(default_factory=lambda: ["permutation"])
    replications: int = 100
    B: int = 1000
    alpha: float = DEFAULT_ALPHA
    block_side: int = None
    window_side: int = None
    contamination: dict = None

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown benchmark config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        if cfg.replications < 50:
            raise DataError(f"replications must be at least 50, got {cfg.replications}")
        return cfg

    def to_dict(self):
        return asdict(self)

    def cells(self):
        contam = ContaminationSpec(**self.contamination) if self.contamination else None
        for method in self.methods:
            for r in self.ranges:
                for est in self.estimators:
                    for m in self.models:
                        for lags in self.lags:
                            yield Cell(
                                theta=float(m["theta"]),
                                b=float(m["b"]),
                                r=float(r),
                                estimator=est,
                                lags=lags,
                                method=method,
                                rows=self.rows,
                                cols=self.cols,
                                sill=self.sill,
                                B=self.B,
                                alpha=self.alpha,
                                block_side=self.block_side,
                                window_side=self.window_side,
                                contamination=contam,
                            )


def run_benchmark(config, master_seed, workers=1):
    """Results for every cell of the sweep, in a fixed order."""
    return [run_cell(cell, config.replications, master_seed, workers) for cell in config.cells()]


def format_table(results):
    """CSV shaped like a rejection table.

    One row per (method, range, estimator); one pair of columns (percentage,
    standard error) per (theta, b, lag set).
    """
    col_keys, row_keys, values = [], [], {}
    for res in results:
        c = res.cell
        ck = (c.theta, c.b, c.lags)
        rk = (c.method, c.r, c.estimator)
        if ck not in col_keys:
            col_keys.append(ck)
        if rk not in row_keys:
            row_keys.append(rk)
        values[rk, ck] = res
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["method", "r", "estimator"]
    for theta, b, lags in col_keys:
        tag = f"theta={theta:.6g};b={b:.6g};{lags}"
        header += [f"{tag}:pct", f"{tag}:se"]
    w.writerow(header)
    for rk in row_keys:
        row = [rk[0], f"{rk[1]:.6g}", rk[2]]
        for ck in col_keys:
            res = values.get((rk, ck))
            if res is None:
                row += ["", ""]
            else:
                row += [f"{100 * res.rate:.1f}", f"{100 * res.se:.2f}"]
        w.writerow(row)
    return buf.getvalue()
