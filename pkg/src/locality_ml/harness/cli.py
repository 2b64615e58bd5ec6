"""Command-line entry point: ``locality-bench <scenario> [options]``.

Exit codes: 0 success, 1 equivalence or claim check failed,
2 configuration error, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

from .. import data, optim, trace
from . import scenarios
from .scenarios import ConfigError, EquivalenceError, ScenarioConfig

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _synth(text: str):
    try:
        n, d, c, spread = text.split(",")
        return int(n), int(d), int(c), float(spread)
    except ValueError:
        raise argparse.ArgumentTypeError("--synth expects n,d,classes,spread") from None


def _int_list(text: str):
    try:
        return tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str):
    return tuple(v for v in text.split(",") if v)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--data", help="libsvm file, *.csv, or a directory with MNIST IDX files")
    g.add_argument("--synth", type=_synth, metavar="N,D,C,SPREAD", help="synthetic Gaussian blobs")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int)
    g.add_argument("--lr", type=float, help="fixed learning rate (with --batch, skips the swsgd sweep)")
    g.add_argument("--optimizer", type=_str_list, default=optim.RULES,
                   help=f"comma-separated subset of {','.join(optim.RULES)}")
    g.add_argument("--window-mult", type=_int_list, default=(0, 1, 2),
                   help="comma-separated cached-batch multipliers m")
    g.add_argument("--k", type=int, default=5)
    g.add_argument("--bandwidth", type=float, default=1.0)
    g.add_argument("--kernel", default="gaussian")
    g.add_argument("--reps", type=int, default=5, help="timed repetitions after one warmup")
    g.add_argument("--out", default="results", help="output directory")
    g.add_argument("--csv", action="store_true", help="also print the summary table as CSV")
    g.add_argument("--svg", action="store_true", help="write an SVG plot (swsgd)")
    g.add_argument("--folds", type=int, default=5)
    g.add_argument("--queries", type=int, help="number of prediction/test points")
    g.add_argument("--block", type=int, default=8, help="query block size for knn-blocked tracing")
    g.add_argument("--hidden", type=_int_list, default=(100, 100), help="MLP hidden layer sizes")
    g.add_argument("--weight-decay", type=float, default=1e-4)
    g.add_argument("--tag", type=_str_list, default=trace.ALGORITHMS,
                   help=f"trace-report algorithms: {','.join(trace.ALGORITHMS)}")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="locality-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="scenario", required=True)
    sub.add_parser("swsgd", parents=[common], help="sliding-window SGD on an MLP, 5-fold CV")
    sub.add_parser("fused-ibl", parents=[common], help="k-NN + Parzen window, separate vs fused")
    sub.add_parser("fused-linear", parents=[common], help="LR + SVM, separate vs joint training")
    sub.add_parser("trace-report", parents=[common], help="reuse-distance histograms and claim checks")
    return parser


def config_from_args(args) -> ScenarioConfig:
    return ScenarioConfig(
        scenario=args.scenario, data=args.data, synth=args.synth, seed=args.seed, epochs=args.epochs,
        batch=args.batch, lr=args.lr, optimizers=args.optimizer, window_mults=args.window_mult,
        k=args.k, bandwidth=args.bandwidth, kernel=args.kernel, reps=args.reps, out=args.out,
        folds=args.folds, queries=args.queries, block_size=args.block, hidden=args.hidden,
        weight_decay=args.weight_decay, tags=args.tag, print_csv=args.csv, svg=args.svg)


def _emit(header, rows, as_csv: bool):
    if as_csv:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
        return
    for row in rows:
        print("  ".join(f"{h}={v:.6g}" if isinstance(v, float) else f"{h}={v}" for h, v in zip(header, row)))


def run(cfg: ScenarioConfig) -> int:
    if cfg.scenario == "swsgd":
        res = scenarios.run_swsgd(cfg)
        _emit(scenarios.SUMMARY_HEADER, res.summary_rows(), cfg.print_csv)
        return EXIT_DIVERGED if res.diverged else EXIT_OK
    if cfg.scenario == "fused-ibl":
        res = scenarios.run_fused_ibl(cfg)
        _emit(["scenario", "load_median_s", "load_min_s", "test_median_s", "test_min_s", "distances",
               "outputs_equal"], res.rows(), cfg.print_csv)
        print(f"fused/separate test time: {res.test_ratio:.3f}")
        return EXIT_OK
    if cfg.scenario == "fused-linear":
        res = scenarios.run_fused_linear(cfg)
        _emit(["scenario", "train_median_s", "train_min_s", "test_median_s", "test_min_s", "row_visits",
               "outputs_equal"], res.rows(), cfg.print_csv)
        print(f"joint/separate train time: {res.train_ratio:.3f}  test time: {res.test_ratio:.3f}")
        return EXIT_OK
    res = scenarios.run_trace_report(cfg)
    for name, report in res.reports.items():
        for line in report.lines():
            print(line)
        print(f"{'PASS' if res.outputs_unchanged[name] else 'FAIL'} {name}: tracing leaves outputs unchanged")
    return EXIT_OK if res.passed else EXIT_ASSERT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(config_from_args(args))
    except (ConfigError, data.DataFormatError, data.EmptyDatasetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EquivalenceError as exc:
        print(f"equivalence check failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except optim.DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
