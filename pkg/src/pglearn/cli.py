"""Command-line front end: split generation, noise injection, search runs,
final evaluation, and plot-data export.

Successful commands exit 0; failures print one JSON error line to stderr and
exit nonzero.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import baselines, dataset as ds
from .dataset import build_label_matrix, load_dataset, load_split, sample_split, save_split
from .graph import HyperConfig, build_knn_graph
from .optimizer import OptimizerSettings
from .propagation import accuracy, lgc_power_solve, predict, unreached
from .scheduler import SchedulerConfig, pg_learn, write_curve_csv, write_report_json

METHODS = ("pg-learn", "gradient", "grid", "random")


@dataclass
class RunSpec:
    """Everything needed to reproduce a run in deterministic-unit mode."""

    dataset: str
    label_column: str | int
    split: str
    method: str
    budget: int
    rate: int
    threads: int
    unit_mode: str
    iters_per_unit: int
    mu: float
    gamma: float
    k_min: int
    k_max: int
    seed: int
    out: str


def _parse_label_column(text):
    return int(text) if text.lstrip("-").isdigit() else text


def _parse_unit(text):
    if text == "seconds":
        return "seconds", 4
    if text == "iters":
        return "iters", 4
    if text.startswith("iters:"):
        u = int(text.split(":", 1)[1])
        if u < 1:
            raise ValueError("iterations per unit must be >= 1")
        return "iters", u
    raise ValueError(f"bad --unit {text!r}; expected iters[:U] or seconds")


def _settings_from(spec):
    return OptimizerSettings(mu=spec.mu, gamma=spec.gamma,
                             k_min=spec.k_min, k_max=spec.k_max)


def cmd_split(args):
    data = load_dataset(args.dataset, _parse_label_column(args.label_column))
    split = sample_split(data, args.labeled_fraction, args.validation_fraction, args.seed)
    save_split(args.out, split)
    print(f"wrote {args.out}: {split.labeled.size} labeled "
          f"({split.validation.size} validation), {split.unlabeled.size} test")
    return 0


def cmd_inject_noise(args):
    data = load_dataset(args.dataset, _parse_label_column(args.label_column))
    noisy = ds.inject_noise_features(data, args.noise_fraction, args.seed)
    names = [f"f{j}" for j in range(data.d)] + \
            [f"noise{j}" for j in range(noisy.d - data.d)]
    ds.save_dataset_csv(args.out, noisy, feature_names=names)
    meta_path = args.meta or args.out + ".meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump({"original_dims": data.d, "noise_columns": list(noisy.noise_columns),
                   "noise_fraction": args.noise_fraction, "seed": args.seed}, fh)
    print(f"wrote {args.out} (d={noisy.d}) and {meta_path}")
    return 0


def _run_search(spec, data, split):
    settings = _settings_from(spec)
    if spec.method in ("pg-learn", "gradient"):
        threads = 1 if spec.method == "gradient" else spec.threads
        cfg = SchedulerConfig(budget=spec.budget, rate=spec.rate, threads=threads,
                              unit=spec.unit_mode, iters_per_unit=spec.iters_per_unit,
                              rng_seed=spec.seed)
        best, report = pg_learn(data, split, cfg, settings=settings)
    elif spec.method == "grid":
        budget, deadline = _baseline_budget(spec)
        best, report = baselines.grid_search(data, split, budget, settings=settings,
                                             deadline_seconds=deadline)
    elif spec.method == "random":
        budget, deadline = _baseline_budget(spec)
        best, report = baselines.random_search_d(data, split, budget, spec.seed,
                                                 settings=settings, deadline_seconds=deadline)
    else:
        raise ValueError(f"unknown method {spec.method!r}")
    return best, report


def _baseline_budget(spec):
    # equal processing budget: T threads x B units x U iterations, one
    # evaluation charged per iteration; seconds mode uses a wall-clock box
    if spec.unit_mode == "iters":
        return spec.budget * spec.threads * spec.iters_per_unit, None
    return 10**9, float(spec.budget * spec.threads)


def cmd_run(args):
    unit_mode, U = _parse_unit(args.unit)
    if args.method not in METHODS:
        raise ValueError(f"unknown method {args.method!r}")
    spec = RunSpec(dataset=args.dataset, label_column=_parse_label_column(args.label_column),
                   split=args.split, method=args.method, budget=args.budget, rate=args.rate,
                   threads=args.threads, unit_mode=unit_mode, iters_per_unit=U,
                   mu=args.mu, gamma=args.gamma, k_min=args.k_min, k_max=args.k_max,
                   seed=args.seed, out=args.out)
    data = load_dataset(spec.dataset, spec.label_column)
    split = load_split(spec.split)
    split.check(data)

    os.makedirs(spec.out, exist_ok=True)
    best, report = _run_search(spec, data, split)
    with open(os.path.join(spec.out, "runspec.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=2)
    write_report_json(os.path.join(spec.out, "report.json"), report)
    write_curve_csv(os.path.join(spec.out, "curve.csv"), report)
    print(f"best config: k={best.k}, val_acc={report['best']['val_acc']}; "
          f"report in {spec.out}")
    return 0


def _select_config(report, select):
    # runs record both the lowest-loss return and the accuracy-best config;
    # reporting follows the accuracy-based convention unless told otherwise
    if select == "loss" or "best_by_val_acc" not in report:
        return report["best"]
    return report["best_by_val_acc"]


def cmd_evaluate(args):
    report_path = args.report
    with open(report_path, encoding="utf-8") as fh:
        report = json.load(fh)
    mu = args.mu
    if mu is None:
        runspec_path = os.path.join(os.path.dirname(report_path) or ".", "runspec.json")
        if os.path.exists(runspec_path):
            with open(runspec_path, encoding="utf-8") as fh:
                mu = json.load(fh)["mu"]
        else:
            mu = 0.99

    data = load_dataset(args.dataset, _parse_label_column(args.label_column))
    split = load_split(args.split)
    split.check(data)
    best = _select_config(report, args.select)
    config = HyperConfig(k=int(best["k"]), a=np.array(best["a"], dtype=np.float64))

    graph = build_knn_graph(data, config)
    Y = build_label_matrix(data, split, include_validation=True)
    sol = lgc_power_solve(graph.P, Y, mu=mu)
    preds = predict(sol.F)
    flags = unreached(sol.F)
    result = {
        "best_config": {"k": config.k, "a": config.a.tolist()},
        "mu": mu,
        "test_accuracy": accuracy(preds, data.labels, split.unlabeled),
        "validation_accuracy": accuracy(preds, data.labels, split.validation),
        "unreached_count": int(flags.sum()),
        "solver_iterations": sol.iterations_used,
        "solver_residual": sol.residual,
    }
    out = args.out or os.path.join(os.path.dirname(report_path) or ".", "evaluation.json")
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2)
    print(f"test accuracy {result['test_accuracy']:.4f} "
          f"({result['unreached_count']} unreached rows); wrote {out}")
    return 0


def cmd_report(args):
    with open(os.path.join(args.run, "report.json"), encoding="utf-8") as fh:
        report = json.load(fh)
    os.makedirs(args.out, exist_ok=True)

    acc_path = os.path.join(args.out, "accuracy_vs_time.csv")
    write_curve_csv(acc_path, report)

    noise_cols = set()
    if args.noise_meta:
        with open(args.noise_meta, encoding="utf-8") as fh:
            noise_cols = set(json.load(fh)["noise_columns"])
    a = np.array(_select_config(report, args.select)["a"], dtype=np.float64)
    weights_path = os.path.join(args.out, "weights_summary.csv")
    with open(weights_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dimension", "kind", "weight"])
        for m, val in enumerate(a):
            w.writerow([m, "noise" if m in noise_cols else "original", repr(float(val))])
    means = {
        "mean_original_weight": float(np.mean([v for m, v in enumerate(a) if m not in noise_cols]))
        if len(noise_cols) < a.size else None,
        "mean_noise_weight": float(np.mean([v for m, v in enumerate(a) if m in noise_cols]))
        if noise_cols else None,
    }
    means_path = os.path.join(args.out, "weights_means.json")
    with open(means_path, "w", encoding="utf-8") as fh:
        json.dump(means, fh, indent=2)
    print(f"wrote {acc_path}, {weights_path}, {means_path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pglearn",
                                description="graph learning for semi-supervised classification")
    p.add_argument("--verbose", action="store_true", help="enable info logging")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("split", help="sample a labeled/validation/test split")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--label-column", required=True)
    sp.add_argument("--labeled-fraction", type=float, default=0.1)
    sp.add_argument("--validation-fraction", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("inject-noise", help="append standard-normal noise features")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--label-column", required=True)
    sp.add_argument("--noise-fraction", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--meta", default=None, help="noise-column metadata path")
    sp.set_defaults(func=cmd_inject_noise)

    sp = sub.add_parser("run", help="run a hyperparameter search")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--label-column", required=True)
    sp.add_argument("--split", required=True)
    sp.add_argument("--method", required=True, choices=METHODS)
    sp.add_argument("--budget", type=int, default=16, help="B, in time units")
    sp.add_argument("--rate", type=int, default=2, help="r, downsampling rate")
    sp.add_argument("--threads", type=int, default=1, help="T, parallel threads")
    sp.add_argument("--unit", default="iters:4", help="iters[:U] or seconds")
    sp.add_argument("--mu", type=float, default=0.99)
    sp.add_argument("--gamma", type=float, default=0.05)
    sp.add_argument("--k-min", type=int, default=5)
    sp.add_argument("--k-max", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("evaluate", help="refit the best config and report test accuracy")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--label-column", required=True)
    sp.add_argument("--split", required=True)
    sp.add_argument("--report", required=True, help="path to report.json from a run")
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--select", choices=("val-acc", "loss"), default="val-acc",
                    help="which recorded best config to refit")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("report", help="export accuracy-vs-time and weight summaries")
    sp.add_argument("--run", required=True, help="run output directory")
    sp.add_argument("--noise-meta", default=None)
    sp.add_argument("--select", choices=("val-acc", "loss"), default="val-acc")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # single machine-readable error line
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
