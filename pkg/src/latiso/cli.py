"""Command-line interface: ``latiso estimate | test | simulate | benchmark``.

Exit codes: 0 success, 1 usage error, 2 data error (bad file, invalid
parameter), 3 degenerate statistics (singular or irreparable covariance).
"""

import argparse
import json
import sys
import warnings

import numpy as np

from . import __version__
from .errors import DataError, DegenerateError
from .harness import BenchmarkConfig, format_table, run_benchmark
from .io import atomic_write_text, dumps_json, read_grid, write_grid, write_json
from .isotest import CONSERVATIVE_WARNING, DEFAULT_ALPHA, DEFAULT_B, permutation_test, subsampling_test
from .lattice import LAMBDA_3, parse_lags, standardize_by_mad
from .simulate import AnisoModel, ContaminationSpec, contaminate, simulate_grf
from .variogram import canonical_estimator, estimate_vector

SCHEMA = 1
EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _alpha(text):
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def parse_contamination(text):
    """``isolated:eps=0.1,mu=5,sigma=1`` or ``block:eps=0.2,mu=0,sigma=5,shape=elongated``."""
    kind, _, body = text.partition(":")
    keys = {"eps": "epsilon", "epsilon": "epsilon", "mu": "mu0", "sigma": "sigma0", "shape": "block_shape"}
    kwargs = {}
    for item in filter(None, body.split(",")):
        k, sep, v = item.partition("=")
        if not sep or k.strip() not in keys:
            raise DataError(f"bad contamination field {item!r}; use eps=, mu=, sigma=, shape=")
        name = keys[k.strip()]
        kwargs[name] = v.strip() if name == "block_shape" else float(v)
    if "epsilon" not in kwargs:
        raise DataError("contamination spec needs eps=")
    return ContaminationSpec(kind.strip(), **kwargs)


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _estimate_csv(vv):
    lines = ["dx,dy,estimate,pair_count,degenerate"]
    for h, e, c, d in zip(vv.lam, vv.estimates, vv.pair_counts, vv.degenerate):
        lines.append(f"{h.dx},{h.dy},{float(e)!r},{int(c)},{str(bool(d)).lower()}")
    return "\n".join(lines) + "\n"


def cmd_estimate(args):
    grid = read_grid(args.grid, args.skip_header)
    lam = parse_lags(args.lags)
    estimator = canonical_estimator(args.estimator)
    scale = None
    if args.standardize_mad:
        grid, scale = standardize_by_mad(grid)
    vv = estimate_vector(
        grid, lam, estimator, args.restriction, rng=np.random.default_rng(args.seed), correction=not args.no_correction
    )
    if args.format == "csv":
        _emit(_estimate_csv(vv), args.out)
        return 0
    report = {
        "schema": SCHEMA,
        "command": "estimate",
        "config": _config(args),
        "mad_scale": scale,
        "result": vv.as_dict(),
    }
    if estimator == "mcd_diff":
        report["directions"] = [
            {
                "direction": [d.dx, d.dy],
                "lags": [[lam[i].dx, lam[i].dy] for i in idx],
                "estimates": [float(vv.estimates[i]) for i in idx],
                "vector_count": int(vv.pair_counts[idx[0]]),
            }
            for d, idx in lam.direction_groups()
        ]
    _emit(dumps_json(report), args.out)
    return 0


def cmd_test(args):
    grid = read_grid(args.grid, args.skip_header)
    lam = parse_lags(args.lags)
    estimator = canonical_estimator(args.estimator)
    if args.method == "permutation" and estimator == "mcd_diff" and lam == LAMBDA_3:
        print(f"warning: {CONSERVATIVE_WARNING}", file=sys.stderr)
    if args.method == "subsampling":
        res = subsampling_test(grid, lam, estimator, args.window_side, args.seed, alpha=args.alpha)
    else:
        res = permutation_test(grid, lam, estimator, args.block_side, args.B, args.seed, args.add_one_pvalue, args.alpha)
    if args.format == "csv":
        d = res.to_dict()
        head = "method,estimator,statistic,d,p_asymptotic,p_resampling,reject,seed"
        row = (
            f"{d['method']},{d['estimator']},{d['statistic']!r},{d['d']},"
            f"{d['p_asymptotic']!r},{d['p_resampling']!r},{str(d['reject']).lower()},{d['seed']}"
        )
        _emit(head + "\n" + row + "\n", args.out)
        return 0
    report = {"schema": SCHEMA, "command": "test", "config": _config(args), "result": res.to_dict()}
    _emit(dumps_json(report), args.out)
    return 0


def _simulate_params(args):
    if args.sidecar:
        with open(args.sidecar, encoding="utf-8") as fh:
            side = json.load(fh)
        p = side["parameters"]
        return p, side["seed"]
    if args.seed is None:
        raise DataError("simulate needs --seed (or --sidecar)")
    p = {
        "rows": args.rows,
        "cols": args.cols,
        "theta": args.theta,
        "ratio": args.ratio,
        "range": args.range,
        "sill": args.sill,
        "count": args.count,
        "contamination": args.contaminate,
    }
    return p, args.seed


def cmd_simulate(args):
    p, seed = _simulate_params(args)
    model = AnisoModel(p["theta"], p["ratio"], p["range"], p["sill"])
    spec = parse_contamination(p["contamination"]) if p["contamination"] else None
    count = int(p.get("count", 1))
    paths = [args.out] if count == 1 else [_numbered(args.out, i) for i in range(count)]
    for i, path in enumerate(paths):
        field_rng = np.random.default_rng(np.random.SeedSequence([seed, 0, i]))
        grid = simulate_grf(p["rows"], p["cols"], model, field_rng)
        if spec is not None:
            grid = contaminate(grid, spec, np.random.default_rng(np.random.SeedSequence([seed, 1, i])))
        write_grid(grid, path)
    sidecar = {
        "schema": SCHEMA,
        "command": "simulate",
        "seed": seed,
        "parameters": p,
        "files": paths,
        "version": __version__,
    }
    write_json(sidecar, args.out + ".json")
    return 0


def _numbered(path, i):
    stem, dot, ext = path.rpartition(".")
    if not dot:
        return f"{path}_{i:03d}"
    return f"{stem}_{i:03d}.{ext}"


def cmd_benchmark(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {args.config}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    seed = args.seed
    if "config" in raw and "schema" in raw:
        # a sidecar written by a previous run
        seed = raw["seed"] if seed is None else seed
        raw = raw["config"]
    if seed is None:
        raise DataError("benchmark needs --seed")
    cfg = BenchmarkConfig.from_dict(raw)
    if "permutation" in cfg.methods and "mcd_diff" in [canonical_estimator(e) for e in cfg.estimators] and "L3" in cfg.lags:
        print(f"warning: {CONSERVATIVE_WARNING}", file=sys.stderr)
    results = run_benchmark(cfg, seed, args.workers)
    atomic_write_text(args.out, format_table(results))
    write_json({"schema": SCHEMA, "command": "benchmark", "seed": seed, "config": cfg.to_dict()}, args.out + ".json")
    return 0


def _config(args):
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def build_parser():
    p = _Parser(prog="latiso", description="Isotropy tests for lattice data.")
    p.add_argument("--version", action="version", version=f"latiso {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def grid_args(sp):
        sp.add_argument("--grid", required=True, help="grid CSV file, northernmost row first, NA for missing")
        sp.add_argument("--skip-header", action="store_true", help="ignore the first line of the grid file")
        sp.add_argument("--estimator", default="matheron", help="matheron, genton or mcd-diff")
        sp.add_argument("--lags", default="L1", help="L1, L2, L3 or custom:dx,dy;dx,dy;...")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")

    e = sub.add_parser("estimate", help="directional variogram estimates")
    grid_args(e)
    e.add_argument("--restriction", choices=("per_lag", "joint"), default="per_lag")
    e.add_argument("--standardize-mad", action="store_true", help="divide the data by their MAD first")
    e.add_argument("--no-correction", action="store_true", help="skip the MCD.diff small-sample correction")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("test", help="isotropy test")
    grid_args(t)
    t.add_argument("--method", choices=("subsampling", "permutation"), default="permutation")
    t.add_argument("--block-side", type=_positive_int, default=None)
    t.add_argument("--window-side", type=_positive_int, default=None)
    t.add_argument("--B", type=_positive_int, default=DEFAULT_B)
    t.add_argument("--alpha", type=_alpha, default=DEFAULT_ALPHA)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--add-one-pvalue", action="store_true", help="report (1 + hits) / (B + 1)")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="simulate anisotropic Gaussian grids")
    s.add_argument("--rows", type=_positive_int, default=24)
    s.add_argument("--cols", type=_positive_int, default=24)
    s.add_argument("--theta", type=float, default=0.0, help="rotation angle in radians")
    s.add_argument("--ratio", type=float, default=1.0, help="anisotropy ratio b >= 1")
    s.add_argument("--range", type=float, default=5.0)
    s.add_argument("--sill", type=float, default=1.0)
    s.add_argument("--count", type=_positive_int, default=1)
    s.add_argument("--contaminate", default=None, help="e.g. isolated:eps=0.1,mu=5,sigma=1")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--sidecar", default=None, help="rerun from a sidecar JSON written earlier")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("benchmark", help="Monte Carlo rejection rates")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--workers", type=_positive_int, default=1)
    b.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            return args.func(args)
    except DegenerateError as exc:
        print(f"latiso: degenerate statistics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, ValueError, KeyError, OSError) as exc:
        print(f"latiso: {exc}", file=sys.stderr)
        return EXIT_DATA


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
