"""Parallel hyperparameter search with successive elimination.

T worker threads each run the gradient optimizer on their own random
configuration. At exponentially spaced checkpoints the worst threads are
terminated and restarted on fresh random configurations while the best
resume exactly where they stopped; after the final leg the configuration
with the lowest validation loss wins.

Legs are barrier-synchronized: every thread finishes its leg before the
elimination runs, so deterministic-unit runs reproduce bit for bit
regardless of actual thread scheduling.
"""

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import build_label_matrix
from .graph import HyperConfig, build_knn_graph
from .optimizer import OptimizerSettings, init_state, mean_pairwise_distance, run_until
from .propagation import accuracy, lgc_power_solve, predict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SchedulerConfig:
    budget: int               # B, in time units
    rate: int = 2             # r, downsampling rate
    threads: int = 1          # T
    unit: str = "iters"       # "iters" (deterministic) or "seconds"
    iters_per_unit: int = 4   # U, optimizer iterations per unit in iters mode
    seconds_per_unit: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.budget < 1 or self.rate < 2 or self.threads < 1:
            raise ValueError("need budget >= 1, rate >= 2, threads >= 1")
        if self.unit not in ("iters", "seconds"):
            raise ValueError("unit must be 'iters' or 'seconds'")


def num_rounds(budget, rate):
    """R = floor(log_rate budget), computed in exact integer arithmetic."""
    R = 0
    power = rate
    while power <= budget:
        R += 1
        power *= rate
    return R


def cumulative_units(i, budget, rate, R):
    """Exact cumulative time after leg i: budget * rate^-(R - i)."""
    return Fraction(budget) / Fraction(rate) ** (R - i)


def round_duration(i, budget, rate, R):
    """Duration of leg i: the initial leg for i = 0, post-elimination legs after."""
    if not 0 <= i <= R:
        raise ValueError("round index out of range")
    if i == 0:
        return cumulative_units(0, budget, rate, R)
    return cumulative_units(i, budget, rate, R) - cumulative_units(i - 1, budget, rate, R)


def get_top(items, losses, m):
    """The m items with lowest loss; non-finite losses rank last, ties keep earlier items."""
    if len(items) != len(losses):
        raise ValueError("items and losses must have equal length")
    if m > len(items):
        raise ValueError("m exceeds the number of items")
    order = sorted(range(len(items)), key=lambda i: (not math.isfinite(losses[i]),
                                                     losses[i] if math.isfinite(losses[i]) else 0.0,
                                                     i))
    return [items[i] for i in order[:m]]


def _thread_rng(master_seed, thread, round_idx):
    # per-(thread, round) streams: reproducible no matter how legs are scheduled
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(thread, round_idx)))


def _test_accuracy(state, dataset, split):
    if state.F_warm is None or np.any(dataset.labels[split.unlabeled] == 0):
        return None
    return accuracy(predict(state.F_warm), dataset.labels, split.unlabeled)


def pg_learn(dataset, split, sched, settings=None):
    """Run the full search; returns (best HyperConfig, report dict)."""
    settings = settings or OptimizerSettings()
    split.check(dataset)
    d_bar = mean_pairwise_distance(dataset.features)
    t_start = time.monotonic()

    B, r, T = sched.budget, sched.rate, sched.threads
    R = num_rounds(B, r)
    survivors_per_round = max(1, T // r)
    cums = [cumulative_units(i, B, r, R) for i in range(R + 1)]
    if sched.unit == "iters":
        cum_iters = [round(sched.iters_per_unit * c) for c in cums]
        legs = [cum_iters[0]] + [cum_iters[i] - cum_iters[i - 1] for i in range(1, R + 1)]
    else:
        legs = [float(cums[0])] + [float(cums[i] - cums[i - 1]) for i in range(1, R + 1)]
        legs = [x * sched.seconds_per_unit for x in legs]

    def fresh_state(thread, round_idx):
        rng = _thread_rng(sched.rng_seed, thread, round_idx)
        return init_state(dataset, split, rng, settings=settings, d_bar=d_bar)

    def _acc_best_test(cand):
        # search-phase test accuracy of a recorded best-accuracy config
        if np.any(dataset.labels[split.unlabeled] == 0):
            return None
        cfg = HyperConfig(k=int(cand["k"]), a=np.array(cand["a"], dtype=np.float64))
        graph = build_knn_graph(dataset, cfg)
        Y = build_label_matrix(dataset, split, include_validation=False)
        sol = lgc_power_solve(graph.P, Y, mu=settings.mu, tol=settings.solver_tol,
                              max_iter=settings.solver_max_iter)
        return accuracy(predict(sol.F), dataset.labels, split.unlabeled)

    states = [fresh_state(t, 0) for t in range(T)]
    config_ids = list(range(T))
    records = [
        {"config_id": t, "thread": t, "round_introduced": 0,
         "k": states[t].config.k, "a_init": states[t].config.a.tolist()}
        for t in range(T)
    ]
    events = []
    checkpoints = []
    # running best by validation accuracy over everything examined, the
    # quantity the experiment harness reports alongside the loss-based return
    acc_best = None

    def run_leg(leg_idx):
        duration = legs[leg_idx]
        starts = [st.iteration for st in states]
        with ThreadPoolExecutor(max_workers=T) as pool:
            if sched.unit == "iters":
                futs = [pool.submit(run_until, st, dataset, split, iterations=duration)
                        for st in states]
            else:
                futs = [pool.submit(run_until, st, dataset, split, seconds=duration)
                        for st in states]
            for f in futs:
                f.result()
        for t in range(T):
            events.append({"round": leg_idx, "thread": t, "config_id": config_ids[t],
                           "iter_start": starts[t], "iter_end": states[t].iteration,
                           "status": states[t].status})

    def ranking_losses():
        # diverged threads cannot resume usefully; rank them last
        return [math.inf if st.diverged else st.config_loss for st in states]

    def checkpoint(leg_idx, survivors, replaced):
        nonlocal acc_best
        losses = ranking_losses()
        per_thread = []
        for t, st in enumerate(states):
            acc = st.config_val_acc
            test = _test_accuracy(st, dataset, split)
            per_thread.append({"thread": t, "config_id": config_ids[t],
                               "loss": _jsonf(st.config_loss), "val_acc": _jsonf(acc),
                               "test_acc": test, "status": st.status})
            cand = st.acc_best
            better = (cand is not None
                      and (acc_best is None or cand["val_acc"] > acc_best["val_acc"]
                           or (cand["val_acc"] == acc_best["val_acc"]
                               and cand["loss"] < acc_best["loss"])))
            if better:
                acc_best = {"config_id": config_ids[t], "thread": t,
                            "k": cand["k"], "a": list(cand["a"]),
                            "loss": _jsonf(cand["loss"]), "val_acc": cand["val_acc"],
                            "test_acc": _acc_best_test(cand), "round": leg_idx}
        best_t = get_top(list(range(T)), losses, 1)[0]
        checkpoints.append({
            "round": leg_idx,
            "cumulative_units": float(cums[leg_idx]),
            "cumulative_iters": (round(sched.iters_per_unit * cums[leg_idx])
                                 if sched.unit == "iters" else None),
            "per_thread": per_thread,
            "survivors": [config_ids[t] for t in survivors],
            "replaced": [config_ids[t] for t in replaced],
            "best_config_id": config_ids[best_t],
            "best_loss": _jsonf(losses[best_t]),
            "best_val_acc_so_far": acc_best["val_acc"] if acc_best else None,
            "test_acc_at_best": acc_best["test_acc"] if acc_best else None,
        })
        return losses

    for leg_idx in range(R + 1):
        run_leg(leg_idx)
        if leg_idx < R:
            losses = ranking_losses()
            keep = set(get_top(list(range(T)), losses, survivors_per_round))
            drop = [t for t in range(T) if t not in keep]
            checkpoint(leg_idx, survivors=sorted(keep), replaced=drop)
            for t in drop:
                _archive(records, config_ids[t], states[t], "replaced")
                states[t] = fresh_state(t, leg_idx + 1)
                config_ids[t] = len(records)
                records.append({"config_id": config_ids[t], "thread": t,
                                "round_introduced": leg_idx + 1,
                                "k": states[t].config.k,
                                "a_init": states[t].config.a.tolist()})
        else:
            losses = checkpoint(leg_idx, survivors=[], replaced=[])

    if all(st.diverged for st in states) or all(not math.isfinite(x) for x in losses):
        raise RuntimeError("all threads diverged; no finite validation loss to rank")

    best_t = get_top(list(range(T)), losses, 1)[0]
    best_state = states[best_t]
    for t in range(T):
        _archive(records, config_ids[t], states[t],
                 "best" if t == best_t else "surviving")

    report = {
        "scheduler": {"budget": B, "rate": r, "threads": T, "rounds": R,
                      "unit": sched.unit, "iters_per_unit": sched.iters_per_unit,
                      "seconds_per_unit": sched.seconds_per_unit,
                      "rng_seed": sched.rng_seed,
                      "survivors_per_round": survivors_per_round},
        "configs": records,
        "checkpoints": checkpoints,
        "events": events,
        "best": {"config_id": config_ids[best_t], "thread": best_t,
                 "k": best_state.config.k, "a": best_state.config.a.tolist(),
                 "loss": _jsonf(best_state.config_loss),
                 "val_acc": _jsonf(best_state.config_val_acc)},
        "best_by_val_acc": acc_best,
        "timing": {"wall_seconds": time.monotonic() - t_start},
    }
    logger.info("examined %d configurations over %d elimination rounds", len(records), R)
    return best_state.config, report


def _archive(records, config_id, state, status):
    rec = records[config_id]
    rec["status"] = status
    rec["k_final"] = state.config.k
    rec["a_final"] = state.config.a.tolist()
    rec["iterations"] = state.iteration
    rec["loss_history"] = [[it, _jsonf(l), _jsonf(a)] for it, l, a in state.loss_history]
    rec["final_loss"] = _jsonf(state.config_loss)
    rec["final_val_acc"] = _jsonf(state.config_val_acc)
    rec["optimizer_status"] = state.status


def _jsonf(x):
    x = float(x)
    return x if math.isfinite(x) else None


def write_report_json(path, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)


def write_curve_csv(path, report):
    """Checkpoint curve: (time, best_val_acc, test_acc) rows for plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_units", "best_val_acc", "test_acc"])
        for cp in report["checkpoints"]:
            w.writerow([cp["cumulative_units"], cp["best_val_acc_so_far"],
                        "" if cp["test_acc_at_best"] is None else cp["test_acc_at_best"]])
