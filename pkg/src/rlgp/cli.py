"""Command-line front end: ``rlgp predict | outliers | bench``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 schema error.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile

from .estimator import EstimatorConfig
from .exceptions import ConfigError, InvalidInputError, SchemaError
from .neighborhood import MinMaxScaler, default_neighbors, load_dataset, load_inputs
from .predictor import predict_points
from .synthbench import load_bench_config, run_benchmark

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SCHEMA = 4


def fmt(v):
    """Locale-independent, round-trip-exact number formatting."""
    return format(float(v), ".17g")


def write_atomic(path, text):
    """Write `text` to `path` via a temporary file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".rlgp-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _estimator_config(args):
    return EstimatorConfig.from_qspec(args.q, tau=args.tau, c0_mode=args.c0,
                                      tol_outer=args.tol_outer, tol_gamma=args.tol_gamma)


def _load_problem(args):
    ds = load_dataset(args.train)
    Xq = load_inputs(args.test, d=ds.d)
    if args.scale:
        scaler = MinMaxScaler(ds.X)
        ds_fit, Xq_fit = scaler.transform_dataset(ds), scaler.transform(Xq)
    else:
        ds_fit, Xq_fit = ds, Xq
    n = default_neighbors(ds.N) if args.neighbors is None else args.neighbors
    if not 1 <= n <= ds.N:
        raise ConfigError(f"--neighbors must be in [1, {ds.N}], got {n}")
    return ds, ds_fit, Xq, Xq_fit, n


def _workers(args):
    return args.workers if args.workers is not None else (os.cpu_count() or 1)


def cmd_predict(args):
    cfg = _estimator_config(args)
    ds, ds_fit, Xq, Xq_fit, n = _load_problem(args)
    results = predict_points(ds_fit, Xq_fit, n, cfg, workers=_workers(args),
                             include_nugget=args.include_nugget)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(ds.d)]
               + ["pred_mean", "pred_var", "q_used", "n_outliers", "seconds", "error"])
    for x, r in zip(Xq, results):
        row = [fmt(v) for v in x]
        if r.error is None:
            row += [fmt(r.prediction.mean), fmt(r.prediction.variance), str(r.model.q_used),
                    str(r.model.outliers.size)]
        else:
            row += ["", "", "", ""]
        row += [fmt(r.seconds) if args.record_time else "", r.error or ""]
        w.writerow(row)
    write_atomic(args.out, buf.getvalue())
    return EXIT_OK


def cmd_outliers(args):
    cfg = _estimator_config(args)
    ds, ds_fit, Xq, Xq_fit, n = _load_problem(args)
    results = predict_points(ds_fit, Xq_fit, n, cfg, workers=_workers(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["test_row", "train_row", "gamma_value"])
    failed = 0
    for i, r in enumerate(results):
        if r.error is not None:
            failed += 1
            continue
        m = r.model
        for pos in m.outliers:
            w.writerow([i, int(m.neighborhood.indices[pos]), fmt(m.gamma.gamma[pos])])
    write_atomic(args.out, buf.getvalue())
    if failed:
        print(f"warning: {failed} test point(s) failed to fit", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    cfg = load_bench_config(args.config)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    report = run_benchmark(cfg, workers=_workers(args))
    sys.stdout.write(report.to_table(include_time=True))
    if args.out:
        write_atomic(args.out, report.to_csv(include_time=args.record_time))
    return EXIT_OK


def _add_fit_options(p):
    p.add_argument("--train", required=True, help="training CSV (x1,...,xd,y)")
    p.add_argument("--test", required=True, help="query CSV (x1,...,xd)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--neighbors", type=int, default=None, help="neighborhood size (default min(50, N))")
    p.add_argument("--q", default="adaptive", help="trimming level: adaptive | <count> | <fraction>n, e.g. 0.15n")
    p.add_argument("--tau", type=float, default=3.0, help="MAD multiplier for adaptive q")
    p.add_argument("--c0", choices=("one", "corrected"), default="one")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; fits are deterministic")
    p.add_argument("--scale", action="store_true", help="min-max scale inputs using the training set")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: logical cores)")
    p.add_argument("--tol-outer", type=float, default=1e-8)
    p.add_argument("--tol-gamma", type=float, default=1e-10)


def build_parser():
    parser = argparse.ArgumentParser(prog="rlgp", description="Robust local Gaussian process regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="posterior mean/variance at each test row")
    _add_fit_options(p)
    p.add_argument("--include-nugget", action="store_true",
                   help="add the fitted nugget to the predictive variance")
    p.add_argument("--record-time", action="store_true",
                   help="fill the seconds column (output is then no longer reproducible)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("outliers", help="training rows flagged in each test point's neighborhood")
    _add_fit_options(p)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("bench", help="run a synthetic benchmark from a key=value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="CSV report path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--record-time", action="store_true",
                   help="write per-point timings into the CSV report")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
