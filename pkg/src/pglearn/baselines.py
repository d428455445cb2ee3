"""Equal-budget baseline searchers: recursive 2-d grid over (k, sigma) and
random sampling of (k, a_1:d).

Both count budget in evaluations, where one evaluation builds the graph for
a configuration, diffuses labels once, and records validation accuracy; one
optimizer iteration costs at least one evaluation, so comparisons against
the scheduler at equal counts do not favor the baselines.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import build_label_matrix
from .graph import HyperConfig, build_knn_graph
from .objective import rank_loss
from .optimizer import (SIGMA_SPAN, OptimizerSettings, mean_pairwise_distance,
                        sample_config)
from .propagation import accuracy, lgc_power_solve, predict

logger = logging.getLogger(__name__)

GRID_INITIAL = 4     # initial grid is GRID_INITIAL x GRID_INITIAL
GRID_REFINE = 3      # each refinement evaluates a 3 x 3 neighborhood


@dataclass
class GridState:
    """Recursive-refinement bookkeeping for the (k, sigma) grid."""

    k_values: list
    sigma_values: list
    depth: int = 0
    evaluated: dict = field(default_factory=dict)  # (k, sigma) -> val_acc


def _evaluate_config(dataset, split, config, settings, Y):
    graph = build_knn_graph(dataset, config)
    sol = lgc_power_solve(graph.P, Y, mu=settings.mu, tol=settings.solver_tol,
                          max_iter=settings.solver_max_iter)
    preds = predict(sol.F)
    val_acc = accuracy(preds, dataset.labels, split.validation)
    loss = rank_loss(sol.F, split, dataset.labels).value
    test_acc = None
    if not np.any(dataset.labels[split.unlabeled] == 0):
        test_acc = accuracy(preds, dataset.labels, split.unlabeled)
    return val_acc, loss, test_acc


def _report_skeleton(method, budget):
    return {"scheduler": {"method": method, "budget_evaluations": budget},
            "configs": [], "checkpoints": [], "events": [], "best": None}


def _record_eval(report, incumbent, idx, config, sigma, val_acc, loss, test_acc):
    report["configs"].append({
        "config_id": idx, "thread": 0, "round_introduced": 0,
        "k": config.k, "sigma": sigma,
        "a_init": config.a.tolist(), "a_final": config.a.tolist(),
        "k_final": config.k, "iterations": 1,
        "loss_history": [[idx, loss, val_acc]],
        "final_loss": loss, "final_val_acc": val_acc, "status": "evaluated",
    })
    if incumbent is None or val_acc > incumbent["val_acc"]:
        incumbent = {"config_id": idx, "k": config.k, "sigma": sigma,
                     "a": config.a.tolist(), "val_acc": val_acc,
                     "loss": loss, "test_acc": test_acc}
    report["checkpoints"].append({
        "round": idx, "cumulative_units": idx + 1, "cumulative_iters": idx + 1,
        "per_thread": [{"thread": 0, "config_id": idx, "loss": loss,
                        "val_acc": val_acc, "test_acc": test_acc, "status": "evaluated"}],
        "survivors": [incumbent["config_id"]], "replaced": [],
        "best_config_id": incumbent["config_id"], "best_loss": incumbent["loss"],
        "best_val_acc_so_far": incumbent["val_acc"],
        "test_acc_at_best": incumbent["test_acc"],
    })
    return incumbent


def grid_search(dataset, split, total_budget, settings=None, d_bar=None,
                deadline_seconds=None):
    """Coarse-to-fine grid over (k, sigma) with uniform a_m = 1/sigma^2.

    Starts from a 4x4 grid and repeatedly refines a 3x3 neighborhood around
    the incumbent with halved spacing until the evaluation budget runs out.
    Returns (best HyperConfig, report).
    """
    if total_budget < 1:
        raise ValueError("need a budget of at least one evaluation")
    settings = settings or OptimizerSettings()
    split.check(dataset)
    if d_bar is None:
        d_bar = mean_pairwise_distance(dataset.features)
    t0 = time.monotonic()
    Y = build_label_matrix(dataset, split, include_validation=False)

    k_hi = min(settings.k_max, dataset.n - 1)
    k_lo = min(settings.k_min, k_hi)
    k_values = sorted(set(int(round(v)) for v in np.linspace(k_lo, k_hi, GRID_INITIAL)))
    sigma_values = list(np.geomspace(SIGMA_SPAN[0] * d_bar, SIGMA_SPAN[1] * d_bar, GRID_INITIAL))
    grid = GridState(k_values=k_values, sigma_values=sigma_values)
    # spacing of the initial axes, halved at each refinement level
    k_step = max(1, (k_hi - k_lo) // (GRID_INITIAL - 1) if GRID_INITIAL > 1 else 1)
    log_sigma_step = (math.log(sigma_values[-1]) - math.log(sigma_values[0])) / (GRID_INITIAL - 1)

    report = _report_skeleton("grid", total_budget)
    incumbent = None
    spent = 0

    def run_cells(cells):
        nonlocal incumbent, spent
        for k, sigma in cells:
            if spent >= total_budget:
                return False
            if deadline_seconds is not None and time.monotonic() - t0 >= deadline_seconds:
                return False
            key = (k, float(sigma))
            if key in grid.evaluated:
                continue
            config = HyperConfig(k=k, a=np.full(dataset.d, 1.0 / sigma**2))
            val_acc, loss, test_acc = _evaluate_config(dataset, split, config, settings, Y)
            grid.evaluated[key] = val_acc
            incumbent = _record_eval(report, incumbent, spent, config, float(sigma),
                                     val_acc, loss, test_acc)
            spent += 1
        return True

    run_cells([(k, s) for k in grid.k_values for s in grid.sigma_values])
    while spent < total_budget:
        grid.depth += 1
        k_step = max(1, k_step // 2)
        log_sigma_step /= 2.0
        k0, s0 = incumbent["k"], incumbent["sigma"]
        ks = sorted(set(min(max(k0 + dk, 1), dataset.n - 1) for dk in (-k_step, 0, k_step)))
        sigmas = [s0 * math.exp(ds) for ds in (-log_sigma_step, 0.0, log_sigma_step)]
        cells = [(k, s) for k in ks for s in sigmas]
        logger.info("grid refinement level %d around k=%d sigma=%.4g", grid.depth, k0, s0)
        if all((k, float(s)) in grid.evaluated for k, s in cells):
            break  # nothing new at this resolution
        if not run_cells(cells):
            break

    best = HyperConfig(k=incumbent["k"], a=np.full(dataset.d, 1.0 / incumbent["sigma"]**2))
    report["best"] = {"config_id": incumbent["config_id"], "k": incumbent["k"],
                      "sigma": incumbent["sigma"], "a": best.a.tolist(),
                      "loss": incumbent["loss"], "val_acc": incumbent["val_acc"]}
    report["best_by_val_acc"] = report["best"]  # incumbent rule is already accuracy-based
    report["timing"] = {"wall_seconds": time.monotonic() - t0}
    report["grid_depth"] = grid.depth
    return best, report


def random_search_d(dataset, split, total_budget, rng_seed, settings=None, d_bar=None,
                    deadline_seconds=None):
    """Sample (k, a_1:d) uniformly from the optimizer's ranges, no gradient steps.

    Returns (best HyperConfig, report); the incumbent is the configuration
    with the highest validation accuracy.
    """
    if total_budget < 1:
        raise ValueError("need a budget of at least one evaluation")
    settings = settings or OptimizerSettings()
    split.check(dataset)
    if d_bar is None:
        d_bar = mean_pairwise_distance(dataset.features)
    t0 = time.monotonic()
    Y = build_label_matrix(dataset, split, include_validation=False)
    rng = np.random.default_rng(rng_seed)

    report = _report_skeleton("random", total_budget)
    incumbent = None
    best_config = None
    for idx in range(total_budget):
        if deadline_seconds is not None and time.monotonic() - t0 >= deadline_seconds and idx > 0:
            break
        config = sample_config(rng, dataset.d, d_bar, dataset.n,
                               k_min=settings.k_min, k_max=settings.k_max)
        val_acc, loss, test_acc = _evaluate_config(dataset, split, config, settings, Y)
        prev = incumbent
        incumbent = _record_eval(report, incumbent, idx, config, None,
                                 val_acc, loss, test_acc)
        if incumbent is not prev:
            best_config = config

    report["best"] = {"config_id": incumbent["config_id"], "k": incumbent["k"],
                      "a": incumbent["a"], "loss": incumbent["loss"],
                      "val_acc": incumbent["val_acc"]}
    report["best_by_val_acc"] = report["best"]  # incumbent rule is already accuracy-based
    report["timing"] = {"wall_seconds": time.monotonic() - t0}
    return best_config, report
