"""Acceptance suite: one test per exit criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. The search-benefit comparison against per-dimension random search
(criterion 7b) is known to fail at this desk scale; see the assertion message
for the measured numbers.
"""

import os
import time

import numpy as np
import pytest

from pglearn.dataset import (build_label_matrix, inject_noise_features, load_dataset,
                             sample_split)
from pglearn.baselines import grid_search, random_search_d
from pglearn.graph import (HyperConfig, build_knn_graph, delta_x_on_pattern, edge_weights)
from pglearn.objective import compute_omega, full_gradient, grad_P
from pglearn.optimizer import (OptimizerSettings, init_state, load_state, run_until,
                               save_state)
from pglearn.propagation import (accuracy, lgc_direct_solve, lgc_power_solve, predict)
from pglearn.scheduler import (SchedulerConfig, cumulative_units, num_rounds, pg_learn,
                               round_duration)

from conftest import make_blobs, make_structured_blobs
from test_objective import elementwise_grad_P, loss_at_fixed_pattern

N_SEEDS = 10
TASK_SETTINGS = OptimizerSettings(mu=0.9, gamma=0.3)
TASK_SCHED = dict(budget=8, rate=2, threads=4, unit="iters", iters_per_unit=4)
EQUAL_EVALS = TASK_SCHED["threads"] * TASK_SCHED["budget"] * TASK_SCHED["iters_per_unit"]


def _test_accuracy(data, split, config, mu):
    graph = build_knn_graph(data, config)
    Y = build_label_matrix(data, split, include_validation=True)
    F = lgc_power_solve(graph.P, Y, mu=mu).F
    return accuracy(predict(F), data.labels, split.unlabeled)


@pytest.fixture(scope="module")
def noise_task():
    data = make_structured_blobs(n=300, seed=0)
    return inject_noise_features(data, 1.0, rng_seed=1000)


@pytest.fixture(scope="module")
def search_runs(noise_task):
    """One PG-learn run per seed plus equal-budget baselines, shared by 6/7."""
    data = noise_task
    t0 = time.monotonic()
    runs = []
    for seed in range(N_SEEDS):
        split = sample_split(data, 0.10, 0.5, rng_seed=seed)
        sched = SchedulerConfig(rng_seed=seed, **TASK_SCHED)
        _, report = pg_learn(data, split, sched, settings=TASK_SETTINGS)
        runs.append((seed, split, report))
    pg_seconds = time.monotonic() - t0
    return data, runs, pg_seconds


def test_c1_gradient_correctness():
    t0 = time.monotonic()
    data = make_blobs(30, 5, 3, seed=42, spread=2.5)
    split = sample_split(data, 0.3, 0.5, rng_seed=7)
    Y = build_label_matrix(data, split, include_validation=False)
    mu = 0.99
    alpha = mu / (1 - mu)
    cfg = HyperConfig(k=4, a=np.random.default_rng(3).uniform(0.05, 0.6, size=5))
    graph = build_knn_graph(data, cfg)
    F = lgc_power_solve(graph.P, Y, mu=mu, tol=1e-10, max_iter=20000).F
    dx = delta_x_on_pattern(data, graph)
    bundle = full_gradient(graph, dx, F, split, data.labels, mu=mu,
                           tol=1e-10, max_iter=20000)
    worst = 0.0
    for m in range(5):
        h = 1e-6 * max(cfg.a[m], 1.0)
        ap, am = cfg.a.copy(), cfg.a.copy()
        ap[m] += h
        am[m] -= h
        fd = (loss_at_fixed_pattern(data, ap, graph, Y, split)
              - loss_at_fixed_pattern(data, am, graph, Y, split)) / (2 * h)
        rel = abs(bundle.dg_da[m] - fd) / max(abs(fd), 1e-12)
        worst = max(worst, rel)
        assert rel <= 1e-4, f"dimension {m}: relative error {rel:.3e}"
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    print(f"\n[PASS] criterion 1: gradient vs central differences, "
          f"max rel err {worst:.2e} <= 1e-4 in {elapsed:.1f}s")


def test_c2_tensor_elementwise_equivalence():
    from conftest import random_graph
    rng = np.random.default_rng(2)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(6, 41))
        data, graph = random_graph(n, seed=trial + 900, d=int(rng.integers(1, 5)))
        dx = delta_x_on_pattern(data, graph)
        got = grad_P(graph, compute_omega(graph.W.data, dx))
        want = elementwise_grad_P(data, graph)
        worst = max(worst, float(np.max(np.abs(got - want))))
        assert np.allclose(got, want, atol=1e-12), f"trial {trial}"
    print(f"\n[PASS] criterion 2: tensor form == elementwise form on 50 graphs, "
          f"max abs diff {worst:.2e} <= 1e-12")


def test_c3_solver_oracle():
    from conftest import random_graph
    rng = np.random.default_rng(3)
    mu = 0.99
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(5, 51))
        c = int(rng.integers(2, 6))
        data, graph = random_graph(n, seed=trial + 2000)
        Y = np.zeros((n, c))
        picks = rng.choice(n, size=max(2, n // 4), replace=False)
        Y[picks, rng.integers(0, c, size=picks.size)] = 1.0
        sol = lgc_power_solve(graph.P, Y, mu=mu, tol=1e-10, max_iter=6000)
        ref = lgc_direct_solve(graph.W, Y, alpha=mu / (1 - mu))
        diff = float(np.max(np.abs(sol.F - ref.F)))
        worst = max(worst, diff)
        assert diff <= 1e-8, f"trial {trial}: {diff:.2e}"
    print(f"\n[PASS] criterion 3: power vs dense solve on 100 instances, "
          f"max inf-norm {worst:.2e} <= 1e-8")


def test_c4_graph_oracle():
    rng = np.random.default_rng(4)
    from pglearn.dataset import Dataset
    for trial in range(50):
        n = int(rng.integers(20, 201))
        d = int(rng.integers(1, 7))
        k = int(rng.integers(1, 9))
        X = rng.normal(size=(n, d))
        a = rng.uniform(0.01, 2.0, size=d)
        labels = np.ones(n, dtype=np.int64)
        labels[n // 2:] = 2
        data = Dataset(X, labels, c=2)
        graph = build_knn_graph(data, HyperConfig(k=k, a=a))

        # dense brute-force oracle: all pairwise distances, independent selection
        diff = X[:, None, :] - X[None, :, :]
        D = (diff * diff) @ a
        idx = np.arange(n)
        expect = set()
        for i in range(n):
            ranked = sorted(zip(D[i], idx))
            chosen = [j for _, j in ranked if j != i][:k]
            for j in chosen:
                expect.add((i, j))
                expect.add((j, i))
        got = set(zip(graph.rows.tolist(), graph.cols.tolist()))
        assert got == expect, f"trial {trial}: pattern mismatch"
        assert np.array_equal(graph.W.data,
                              edge_weights(X, a, graph.rows, graph.cols)), \
            f"trial {trial}: weight mismatch"
    print("\n[PASS] criterion 4: union-kNN construction matches dense brute force "
          "on 50 configs (exact pattern and weights)")


def test_c5_scheduler_arithmetic():
    t0 = time.monotonic()
    R = num_rounds(16, 2)
    assert R == 4
    assert [cumulative_units(i, 16, 2, R) for i in range(R + 1)] == [1, 2, 4, 8, 16]
    assert [round_duration(i, 16, 2, R) for i in range(R + 1)] == [1, 1, 2, 4, 8]
    # 24 configurations examined: T + (T - T//r) * R
    T, r = 8, 2
    assert T + (T - T // r) * R == 24
    for rr in (2, 3, 4):
        for B in range(2, 65):
            RR = num_rounds(B, rr)
            assert sum(round_duration(i, B, rr, RR) for i in range(RR + 1)) == B
    elapsed = time.monotonic() - t0
    assert elapsed < 1.0
    print(f"\n[PASS] criterion 5: elimination arithmetic (worked example + "
          f"exhaustive sums) in {elapsed:.2f}s")


def test_c5_scheduler_run_counts(noise_task):
    # the worked example executed for real: 24 configs, checkpoints 1,2,4,8,16
    data = noise_task
    split = sample_split(data, 0.10, 0.5, rng_seed=0)
    sched = SchedulerConfig(budget=16, rate=2, threads=8, unit="iters",
                            iters_per_unit=1, rng_seed=0)
    _, report = pg_learn(data, split, sched, settings=TASK_SETTINGS)
    assert len(report["configs"]) == 24
    assert [cp["cumulative_units"] for cp in report["checkpoints"]] == [1, 2, 4, 8, 16]
    print("\n[PASS] criterion 5 (live run): 24 configurations, checkpoints at 1,2,4,8,16")


def test_c6_noise_weight_recovery(search_runs):
    data, runs, pg_seconds = search_runs
    informative = [m for m in range(data.d) if m not in data.noise_columns]
    noise = list(data.noise_columns)
    wins = 0
    for seed, split, report in runs:
        a = np.array(report["best_by_val_acc"]["a"])
        if a[informative].mean() > a[noise].mean():
            wins += 1
    assert wins >= 8, f"informative > noise mean weight in only {wins}/{N_SEEDS} seeds"
    assert pg_seconds < 300.0, f"search runs took {pg_seconds:.0f}s >= 5 min"
    print(f"\n[PASS] criterion 6: learned weights favor informative dims in "
          f"{wins}/{N_SEEDS} seeds (runs took {pg_seconds:.0f}s)")


@pytest.fixture(scope="module")
def method_accuracies(search_runs):
    data, runs, _ = search_runs
    mu = TASK_SETTINGS.mu
    rows = []
    for seed, split, report in runs:
        bba = report["best_by_val_acc"]
        pg_cfg = HyperConfig(k=int(bba["k"]), a=np.array(bba["a"]))
        grid_cfg, _ = grid_search(data, split, EQUAL_EVALS, settings=TASK_SETTINGS)
        rand_cfg, _ = random_search_d(data, split, EQUAL_EVALS, rng_seed=seed,
                                      settings=TASK_SETTINGS)
        rows.append({
            "seed": seed,
            "pg": _test_accuracy(data, split, pg_cfg, mu),
            "grid": _test_accuracy(data, split, grid_cfg, mu),
            "rand": _test_accuracy(data, split, rand_cfg, mu),
        })
    return rows


def test_c7a_search_benefit_vs_grid(method_accuracies):
    wins = sum(r["pg"] >= r["grid"] for r in method_accuracies)
    detail = ", ".join(f"{r['pg']:.3f}/{r['grid']:.3f}" for r in method_accuracies)
    assert wins >= 7, f"pg >= grid in only {wins}/{N_SEEDS} seeds ({detail})"
    print(f"\n[PASS] criterion 7a: test accuracy >= grid search in {wins}/{N_SEEDS} seeds")


def test_c7b_search_benefit_vs_random(method_accuracies):
    # Known shortfall at desk scale: with d = 8 and a 128-evaluation budget,
    # per-dimension random search saturates this task (the regime where it
    # collapses, d in the hundreds, needs the external benchmark datasets).
    # The criterion is asserted as stated; the failure is documented, not
    # worked around.
    wins = sum(r["pg"] >= r["rand"] for r in method_accuracies)
    pg_mean = np.mean([r["pg"] for r in method_accuracies])
    rand_mean = np.mean([r["rand"] for r in method_accuracies])
    detail = ", ".join(f"{r['pg']:.3f}/{r['rand']:.3f}" for r in method_accuracies)
    assert wins >= 7, (
        f"pg >= rand in only {wins}/{N_SEEDS} seeds "
        f"(means: pg {pg_mean:.3f}, rand {rand_mean:.3f}; per-seed {detail})")
    print(f"\n[PASS] criterion 7b: test accuracy >= random search in {wins}/{N_SEEDS} seeds")


def test_c7_extended_usps_gate():
    path = os.environ.get("PGLEARN_USPS_CSV")
    if not path:
        pytest.skip("set PGLEARN_USPS_CSV to a USPS csv to run the extended check")
    data = load_dataset(path, label_column=os.environ.get("PGLEARN_USPS_LABEL", "label"))
    split = sample_split(data, 0.10, 0.5, rng_seed=0)
    sched = SchedulerConfig(budget=90, rate=2, threads=1, unit="seconds",
                            seconds_per_unit=10.0, rng_seed=0)
    _, report = pg_learn(data, split, sched)
    bba = report["best_by_val_acc"]
    acc = _test_accuracy(data, split,
                         HyperConfig(k=int(bba["k"]), a=np.array(bba["a"])), 0.99)
    assert acc >= 0.85
    print(f"\n[PASS] extended: USPS 10%-labeled test accuracy {acc:.4f} >= 0.85")


def test_c8_resumability(tmp_path):
    data = make_blobs(60, 3, 3, seed=11)
    split = sample_split(data, 0.2, 0.5, rng_seed=5)
    for seed in range(20):
        full = init_state(data, split, rng_seed=seed)
        run_until(full, data, split, iterations=10)

        part = init_state(data, split, rng_seed=seed)
        run_until(part, data, split, iterations=4)
        path = tmp_path / f"state{seed}.json"
        save_state(path, part)
        resumed = load_state(path)
        run_until(resumed, data, split, iterations=6)

        assert resumed.config.k == full.config.k
        assert np.array_equal(resumed.config.a, full.config.a), f"seed {seed}"
        assert resumed.loss_history == full.loss_history, f"seed {seed}"
        assert np.array_equal(resumed.F_warm, full.F_warm), f"seed {seed}"
    print("\n[PASS] criterion 8: checkpoint/restore trajectories bitwise-identical "
          "on 20 instances")


def test_c9_complexity_accounting():
    k, d = 8, 6
    rng = np.random.default_rng(9)
    per_n = {}
    for n in (100, 200, 400):
        from pglearn.dataset import Dataset
        X = rng.uniform(size=(n, d))
        labels = np.ones(n, dtype=np.int64)
        labels[n // 2:] = 2
        data = Dataset(X, labels, c=2)
        graph = build_knn_graph(data, HyperConfig(k=k, a=np.full(d, 2.0)))
        dx = delta_x_on_pattern(data, graph)
        omega = compute_omega(graph.W.data, dx)
        dP = grad_P(graph, omega)
        for tensor in (dx, omega, dP):
            assert tensor.size <= 2 * k * n * d
        # the dense buffers grad_F allocates stay within the edge-tensor footprint
        e, c = graph.edge_count, 2
        chunk = int(np.clip((e * d) // (n * c), 1, d))
        assert chunk * n * c <= e * d
        per_n[n] = omega.size
    base = per_n[100] / 100
    for n in (200, 400):
        ratio = (per_n[n] / n) / base
        assert abs(ratio - 1.0) <= 0.10, f"entries per node drifted {ratio:.3f} at n={n}"
    print(f"\n[PASS] criterion 9: gradient tensors within 2knd entries and linear "
          f"in n within 10% (per-node entries: "
          f"{ {n: per_n[n] / n for n in per_n} })")
