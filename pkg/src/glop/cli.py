"""Command line interface.

Human-readable tables go to stdout; machine-readable artifacts (model JSON,
path CSV, reports) are only ever written to files named by flags.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .baselines import (BenchmarkConfig, detect_outliers, export_benchmark_csv,
                        export_benchmark_json, run_table1_benchmark)
from .bcm import (LOSS_SCALINGS, PER_PATIENT_HALF_N, GlopPenalty, load_model,
                  save_model, solve_glop_bcm)
from .data import (generate_outlier_scenario, generate_small_example,
                   generate_tau_population, load_csv, write_csv)
from .errors import DataError, SolverError
from .lars import export_path_csv, glop_path
from .selection import (CvGrid, bic_grid_select, cv_grid_search,
                        export_score_table_csv)
from .uniqueness import theorem1_certificate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SOLVER = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_io(sub, needs_output=True):
    sub.add_argument("--input", required=True, help="dataset CSV")
    sub.add_argument("--patient-column", default="patient_id")
    sub.add_argument("--target-column", default="y")
    sub.add_argument("--add-intercept", action="store_true",
                     help="prepend a constant 1 column")
    if needs_output:
        sub.add_argument("--output", required=True)


def _add_penalties(sub):
    sub.add_argument("--lambda-g", type=float, required=True)
    sub.add_argument("--lambda-l", type=float, required=True)
    sub.add_argument("--loss", choices=LOSS_SCALINGS, default=PER_PATIENT_HALF_N)


def _add_grid(sub):
    sub.add_argument("--grid-max", type=float, default=100.0)
    sub.add_argument("--grid-step", type=float, default=5.0)
    sub.add_argument("--no-constraint", action="store_true",
                     help="drop the lambda_g <= lambda_l restriction")
    sub.add_argument("--loss", choices=LOSS_SCALINGS, default=PER_PATIENT_HALF_N)
    sub.add_argument("--seed", type=int, default=0)


def build_parser() -> _Parser:
    parser = _Parser(prog="glop", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit at a fixed penalty pair")
    _add_io(fit)
    _add_penalties(fit)
    fit.add_argument("--tolerance", type=float, default=1e-9)
    fit.add_argument("--unpenalized-intercept", action="store_true")
    fit.add_argument("--require-unique", action="store_true",
                     help="refuse to fit unless the uniqueness certificate passes")
    fit.add_argument("--certificate-output", default=None,
                     help="where to write the certificate JSON (with --require-unique)")

    path = subs.add_parser("path", help="full fixed-ratio regularization path")
    _add_io(path)
    path.add_argument("--lambda-g-ref", type=float, required=True)
    path.add_argument("--lambda-l-ref", type=float, required=True)
    path.add_argument("--loss", choices=LOSS_SCALINGS, default=PER_PATIENT_HALF_N)
    path.add_argument("--min-lambda", type=float, default=None)
    path.add_argument("--max-knots", type=int, default=None)

    cv = subs.add_parser("cv", help="cross-validated grid selection")
    _add_io(cv)
    _add_grid(cv)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--model-output", default=None)
    cv.add_argument("--table-output", default=None)

    bic = subs.add_parser("bic", help="BIC grid selection")
    _add_io(bic)
    _add_grid(bic)
    bic.add_argument("--model-output", default=None)
    bic.add_argument("--table-output", default=None)

    cert = subs.add_parser("certify", help="uniqueness certificate for data + penalties")
    _add_io(cert)
    _add_penalties(cert)
    cert.add_argument("--ain-mode", choices=("brute_force", "assume_continuous"),
                      default="brute_force")

    out = subs.add_parser("outliers", help="predictive-outlier report from a model")
    out.add_argument("--model", required=True, help="model JSON from fit/cv/bic")
    out.add_argument("--percentile", type=float, default=90.0)
    out.add_argument("--output", required=True, help="report JSON")

    sim = subs.add_parser("simulate", help="write a synthetic dataset CSV")
    sim.add_argument("--scenario", choices=("small-example", "tau", "outlier"),
                     required=True)
    sim.add_argument("--p", type=int, default=16)
    sim.add_argument("--kappa", type=int, default=16)
    sim.add_argument("--n", type=int, default=64)
    sim.add_argument("--c", type=float, default=10.0)
    sim.add_argument("--z-probability", type=float, default=0.2)
    sim.add_argument("--include-z", action="store_true")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output", required=True)

    bench = subs.add_parser("bench", help="synthetic benchmark (CSV summary)")
    bench.add_argument("--p", type=int, default=16)
    bench.add_argument("--kappa", type=int, default=16)
    bench.add_argument("--n", type=int, default=64)
    bench.add_argument("--trials", type=int, default=20)
    bench.add_argument("--n-test", type=int, default=1000)
    bench.add_argument("--folds", type=int, default=10)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--methods", default="glop,dirty,lasso")
    bench.add_argument("--threads", type=int,
                       default=int(os.environ.get("GLOP_THREADS", "1")))
    bench.add_argument("--output", required=True, help="summary CSV")
    bench.add_argument("--json-output", default=None, help="per-trial JSON")
    return parser


def _load(args):
    return load_csv(args.input, patient_column=args.patient_column,
                    target_column=args.target_column,
                    add_intercept=args.add_intercept)


def _cmd_fit(args) -> int:
    dataset = _load(args)
    penalty = GlopPenalty(args.lambda_g, args.lambda_l, args.loss)
    if args.require_unique:
        cert = theorem1_certificate(dataset, penalty)
        if args.certificate_output:
            with open(args.certificate_output, "w", encoding="utf-8") as fh:
                json.dump(cert.to_dict(), fh, indent=2)
        if not cert.verdict.startswith("unique"):
            print("uniqueness certificate failed:", file=sys.stderr)
            print(json.dumps(cert.to_dict(), indent=2), file=sys.stderr)
            return EXIT_SOLVER
    model = solve_glop_bcm(dataset, penalty, tolerance=args.tolerance,
                           unpenalized_intercept=args.unpenalized_intercept)
    save_model(model, args.output)
    print(f"fitted {dataset.kappa} patients, objective {model.objective:.6g}, "
          f"converged={model.converged}")
    return EXIT_OK


def _cmd_path(args) -> int:
    dataset = _load(args)
    gpath = glop_path(dataset, args.lambda_g_ref, args.lambda_l_ref,
                      loss_scaling=args.loss, max_knots=args.max_knots,
                      min_lambda=args.min_lambda)
    export_path_csv(gpath, args.output)
    print(f"path with {len(gpath.path.knots)} knots, lambda_max="
          f"{gpath.path.lambda_max:.6g}, truncated={gpath.path.truncated}")
    return EXIT_OK


def _grid_from_args(args) -> CvGrid:
    values = tuple(np.arange(0.0, args.grid_max + args.grid_step / 2, args.grid_step))
    return CvGrid(lambda_g_values=values, lambda_l_values=values,
                  require_g_le_l=not args.no_constraint)


def _write_selection(result, args) -> None:
    doc = {"lambda_g": result.penalty.lambda_g,
           "lambda_l": result.penalty.lambda_l,
           "loss_scaling": result.penalty.loss_scaling,
           "score": result.score,
           "criterion": result.criterion,
           "ties_broken": [list(t) for t in result.ties_broken],
           "table": [list(row) for row in result.table]}
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    if args.model_output:
        save_model(result.model, args.model_output)
    if args.table_output:
        export_score_table_csv(result, args.table_output)
    print(f"selected lambda_g={result.penalty.lambda_g:g}, "
          f"lambda_l={result.penalty.lambda_l:g}, "
          f"{result.criterion} score {result.score:.6g}")


def _cmd_cv(args) -> int:
    dataset = _load(args)
    result = cv_grid_search(dataset, grid=_grid_from_args(args),
                            n_folds=args.folds, seed=args.seed,
                            loss_scaling=args.loss)
    _write_selection(result, args)
    return EXIT_OK


def _cmd_bic(args) -> int:
    dataset = _load(args)
    result = bic_grid_select(dataset, grid=_grid_from_args(args),
                             loss_scaling=args.loss)
    _write_selection(result, args)
    return EXIT_OK


def _cmd_certify(args) -> int:
    dataset = _load(args)
    penalty = GlopPenalty(args.lambda_g, args.lambda_l, args.loss)
    cert = theorem1_certificate(dataset, penalty, per_patient_ain=args.ain_mode)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(cert.to_dict(), fh, indent=2)
    print(f"verdict: {cert.verdict}")
    return EXIT_OK


def _cmd_outliers(args) -> int:
    model = load_model(args.model)
    report = detect_outliers(model, percentile=args.percentile)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(f"{'patient':<16} {'local mass':>12} {'flagged':>8}")
    for k, pid in enumerate(model.patient_ids):
        flag = "yes" if pid in report.flagged_patient_ids else ""
        print(f"{pid:<16} {report.local_mass[k]:>12.6g} {flag:>8}")
    print(f"threshold {report.threshold:.6g} "
          f"({report.percentile:g}th percentile, nearest rank, strict >)")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.scenario == "small-example":
        dataset, _ = generate_small_example(args.seed)
    elif args.scenario == "tau":
        dataset, _ = generate_tau_population(args.p, args.kappa, args.n, args.seed)
    else:
        dataset, _, flags = generate_outlier_scenario(
            args.kappa, args.n, args.p, args.c, args.z_probability, args.seed,
            include_z=args.include_z)
        print("true outliers:", ", ".join(
            pid for pid, f in zip(dataset.patient_ids, flags) if f))
    write_csv(dataset, args.output)
    print(f"wrote {dataset.total_rows} rows for {dataset.kappa} patients")
    return EXIT_OK


def _cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    config = BenchmarkConfig(p=args.p, kappa=args.kappa, n=args.n,
                             trials=args.trials, seed=args.seed,
                             n_test=args.n_test, n_folds=args.folds)
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
    return EXIT_OK


_COMMANDS = {"fit": _cmd_fit, "path": _cmd_path, "cv": _cmd_cv, "bic": _cmd_bic,
             "certify": _cmd_certify, "outliers": _cmd_outliers,
             "simulate": _cmd_simulate, "bench": _cmd_bench}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
