#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Both variants are called directly, so one process covers the kernel
comparison. With ``--end-to-end`` the script also times a whole Genton
permutation test in two subprocesses, one with ``LATISO_DISABLE_NUMBA=1``.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --end-to-end --repeat 3
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from latiso import kernels
from latiso.robust.chi2 import chi_sq_quantile
from latiso.robust.mcd import consistency_factor, reweight_factor


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def batch_inputs(rng, n_blocks, per_block, n_rep):
    sizes = rng.integers(per_block - 2, per_block + 3, size=n_blocks)
    off0 = np.concatenate(([0], np.cumsum(sizes)))
    sizes1 = rng.integers(per_block - 2, per_block + 3, size=n_blocks)
    off1 = np.concatenate(([0], np.cumsum(sizes1)))
    flat0 = rng.standard_normal(off0[-1])
    flat1 = rng.standard_normal(off1[-1])
    masks = rng.integers(0, 2, size=(n_rep, n_blocks)).astype(bool)
    return flat0, off0, flat1, off1, masks


def kernel_cases(rng):
    cutoff = chi_sq_quantile(0.975, 1)
    c_rew = reweight_factor(1)
    for n in (100, 550, 2000):
        x = rng.standard_normal(n)
        h = n // 2 + 1
        k = h * (h - 1) // 2
        yield f"qn_gap n={n}", (lambda f, x=x, k=k: f(x, k)), kernels.qn_gap_numba, kernels.qn_gap_numpy
        c_raw = consistency_factor((n // 2 + 1) / n, 1)
        yield (
            f"umcd n={n}",
            (lambda f, x=x, n=n, c_raw=c_raw: f(x, (n + 2) // 2, c_raw, cutoff, c_rew)),
            kernels.umcd_reweighted_numba,
            kernels.umcd_reweighted_numpy,
        )
    args = batch_inputs(rng, n_blocks=16, per_block=30, n_rep=500)
    yield "qn_gap_batch 500x16", (lambda f: f(*args)), kernels.qn_gap_batch_numba, kernels.qn_gap_batch_numpy
    n_max = int(np.maximum(np.diff(args[1]), np.diff(args[3])).sum())
    c_by_n = np.array([consistency_factor((m // 2 + 1) / m, 1) if m else 1.0 for m in range(n_max + 1)])
    yield (
        "umcd_batch 500x16",
        (lambda f: f(*args, c_by_n, cutoff, c_rew)),
        kernels.umcd_batch_numba,
        kernels.umcd_batch_numpy,
    )


def end_to_end(repeat):
    code = (
        "import time, numpy as np\n"
        "from latiso import AnisoModel, LAMBDA_2, simulate_grf, permutation_test\n"
        "g = simulate_grf(24, 24, AnisoModel(), 1)\n"
        "permutation_test(g, LAMBDA_2, 'genton', B=100, seed=0)\n"
        "ts = []\n"
        f"for _ in range({repeat}):\n"
        "    t0 = time.perf_counter(); permutation_test(g, LAMBDA_2, 'genton', B=500, seed=0)\n"
        "    ts.append(time.perf_counter() - t0)\n"
        "print(min(ts))\n"
    )
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, LATISO_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call, fast, slow in kernel_cases(rng):
        a, b = call(fast), call(slow)
        if not np.allclose(np.asarray(a[0] if isinstance(a, tuple) else a, dtype=float),
                           np.asarray(b[0] if isinstance(b, tuple) else b, dtype=float), equal_nan=True):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_fast = best_of(lambda: call(fast), args.repeat)
        t_slow = best_of(lambda: call(slow), args.repeat)
        print(f"{name:<22}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>12.3f}{t_slow / t_fast:>9.1f}x")

    if args.end_to_end:
        t = end_to_end(args.repeat)
        print("\ngenton L2 permutation test, B=500, 24x24")
        print(f"  numba  {t['numba']:.3f} s")
        print(f"  numpy  {t['numpy']:.3f} s  ({t['numpy'] / t['numba']:.1f}x slower)")


if __name__ == "__main__":
    main()
