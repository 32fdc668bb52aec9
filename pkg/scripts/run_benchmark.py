#!/usr/bin/env python3
"""Run the synthetic multi-task benchmark and write summary CSV/JSON.

Thin wrapper over the library harness; see ``glop bench --help`` for the
equivalent CLI subcommand.
"""
import argparse
import os

from glop.baselines import (BenchmarkConfig, export_benchmark_csv,
                            export_benchmark_json, run_table1_benchmark)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=16)
    ap.add_argument("--kappa", type=int, default=16)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--folds", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--methods", default="glop,dirty,lasso")
    ap.add_argument("--threads", type=int,
                    default=int(os.environ.get("GLOP_THREADS", "1")))
    ap.add_argument("--output", default="benchmark.csv")
    ap.add_argument("--json-output", default=None)
    args = ap.parse_args()

    config = BenchmarkConfig(p=args.p, kappa=args.kappa, n=args.n,
                             trials=args.trials, seed=args.seed,
                             n_test=args.n_test, n_folds=args.folds)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    report = run_table1_benchmark(config, methods=methods, threads=args.threads)
    export_benchmark_csv(report, args.output)
    if args.json_output:
        export_benchmark_json(report, args.json_output)
    print(f"{'method':<8} {'mean MSE':>12} {'sd':>10}")
    for m in report.methods:
        print(f"{m:<8} {report.mean_mse[m]:>12.4f} {report.sd_mse[m]:>10.4f}")
    for (a, b), (stat, pval) in report.t_tests.items():
        print(f"t-test {a} vs {b}: t={stat:.3f}, p={pval:.4g}")
    for note in report.notes:
        print("note:", note)


if __name__ == "__main__":
    main()
