"""Adaptive local search over the per-dimension weights at fixed k.

One step: rebuild the kNN graph for the current weights, diffuse labels,
evaluate the validation rank loss, compute its gradient, then take a
projected descent step. States serialize to JSON and resume bitwise, which
the parallel scheduler relies on for suspend/resume.
"""

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial.distance import pdist

from .dataset import build_label_matrix
from .graph import HyperConfig, build_knn_graph, delta_x_on_pattern
from .objective import full_gradient, rank_loss
from .propagation import accuracy, lgc_power_solve, predict

K_MIN_DEFAULT = 5
K_MAX_DEFAULT = 20
SIGMA_SPAN = (0.1, 10.0)  # sigma sampled log-uniform in [0.1, 10] x mean pairwise distance


@dataclass
class OptimizerSettings:
    mu: float = 0.99
    solver_tol: float = 1e-6
    solver_max_iter: int = 1000
    # gradient solves need only a descent direction; backtracking covers the rest
    grad_tol: float = 1e-4
    grad_max_iter: int = 1000
    gamma: float = 0.05
    eps_conv: float = 1e-3
    backtrack_max: int = 8
    k_min: int = K_MIN_DEFAULT
    k_max: int = K_MAX_DEFAULT


@dataclass
class OptimizerState:
    """Everything one search thread owns; JSON round-trips exactly."""

    config: HyperConfig
    gamma: float
    a_floor: float
    settings: OptimizerSettings
    iteration: int = 0
    loss_history: list = field(default_factory=list)  # (iteration, loss, val_acc)
    F_warm: np.ndarray | None = None
    converged: bool = False
    diverged: bool = False
    # metrics evaluated at exactly the current config (post-step binding)
    config_loss: float = math.nan
    config_val_acc: float = math.nan
    # best validation accuracy seen over the whole trajectory, with the exact
    # config that produced it (ties keep the lower loss)
    acc_best: dict | None = None
    # runtime-only cache of the last accepted config's graph; never serialized
    _graph_cache: tuple | None = field(default=None, repr=False)

    @property
    def status(self):
        if self.diverged:
            return "diverged"
        if self.converged:
            return "converged"
        return "running"

    @property
    def last_loss(self):
        return self.loss_history[-1][1] if self.loss_history else math.nan

    @property
    def last_val_acc(self):
        return self.loss_history[-1][2] if self.loss_history else math.nan

    def _note_eval(self, config, loss, val_acc):
        if self.acc_best is None or val_acc > self.acc_best["val_acc"] \
                or (val_acc == self.acc_best["val_acc"] and loss < self.acc_best["loss"]):
            self.acc_best = {"k": config.k, "a": config.a.tolist(),
                             "loss": loss, "val_acc": val_acc,
                             "iteration": self.iteration}


def mean_pairwise_distance(features, sample_cap=1000, rng_seed=0):
    """Mean Euclidean distance over a subsample of at most sample_cap points."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if n > sample_cap:
        rng = np.random.default_rng(rng_seed)
        X = X[rng.choice(n, size=sample_cap, replace=False)]
    d_bar = float(pdist(X).mean())
    if d_bar <= 0:
        raise ValueError("degenerate dataset: zero mean pairwise distance")
    return d_bar


def sample_config(rng, d, d_bar, n, k_min=K_MIN_DEFAULT, k_max=K_MAX_DEFAULT):
    """Random configuration: k uniform in [k_min, min(k_max, n-1)], sigma log-uniform."""
    k_hi = min(k_max, n - 1)
    k_lo = min(k_min, k_hi)
    k = int(rng.integers(k_lo, k_hi + 1))
    lo, hi = math.log(SIGMA_SPAN[0] * d_bar), math.log(SIGMA_SPAN[1] * d_bar)
    sigma = np.exp(rng.uniform(lo, hi, size=d))
    return HyperConfig(k=k, a=1.0 / sigma**2)


def init_state(dataset, split, rng_seed, settings=None, d_bar=None):
    """Draw a fresh configuration and wrap it in an optimizer state."""
    split.check(dataset)
    settings = settings or OptimizerSettings()
    if d_bar is None:
        d_bar = mean_pairwise_distance(dataset.features)
    rng = np.random.default_rng(rng_seed)
    config = sample_config(rng, dataset.d, d_bar, dataset.n,
                           k_min=settings.k_min, k_max=settings.k_max)
    return OptimizerState(config=config, gamma=settings.gamma,
                          a_floor=1e-12 / d_bar**2, settings=settings)


def _evaluate(state, dataset, split, Y, config, warm, graph=None):
    if graph is None:
        graph = build_knn_graph(dataset, config)
    s = state.settings
    sol = lgc_power_solve(graph.P, Y, mu=s.mu, tol=s.solver_tol,
                          max_iter=s.solver_max_iter, F0=warm)
    loss = rank_loss(sol.F, split, dataset.labels)
    return graph, sol.F, loss.value


def gradient_step(state, dataset, split):
    """One optimization pass; appends to loss_history and updates the config."""
    if state.converged or state.diverged:
        return state
    s = state.settings
    Y = build_label_matrix(dataset, split, include_validation=False)
    cached = None
    if state._graph_cache is not None and state._graph_cache[0] is state.config:
        cached = state._graph_cache[1]
    graph, F, loss = _evaluate(state, dataset, split, Y, state.config, state.F_warm,
                               graph=cached)
    val_acc = accuracy(predict(F), dataset.labels, split.validation)
    state.loss_history.append((state.iteration, loss, val_acc))
    state.iteration += 1
    state.config_loss, state.config_val_acc = loss, val_acc
    state._note_eval(state.config, loss, val_acc)

    delta_x = delta_x_on_pattern(dataset, graph)
    bundle = full_gradient(graph, delta_x, F, split, dataset.labels, mu=s.mu,
                           tol=s.grad_tol, max_iter=s.grad_max_iter)
    g = bundle.dg_da
    if not np.all(np.isfinite(g)):
        state.diverged = True
        return state
    g_max = float(np.max(np.abs(g)))
    if g_max == 0.0:
        state.converged = True
        state.F_warm = F
        state._graph_cache = (state.config, graph)
        return state
    g_hat = g / g_max

    a_prev = state.config.a
    accepted = None
    full_step = None
    for halving in range(s.backtrack_max + 1):
        step = state.gamma * 0.5**halving
        a_trial = np.maximum(a_prev - step * g_hat, state.a_floor)
        trial_cfg = HyperConfig(k=state.config.k, a=a_trial)
        graph_t, F_trial, loss_trial = _evaluate(state, dataset, split, Y, trial_cfg, F)
        if halving == 0:
            full_step = (trial_cfg, F_trial, graph_t, loss_trial)
        if loss_trial < loss:
            accepted = (trial_cfg, F_trial, graph_t, loss_trial)
            break
    if accepted is None:
        # no halving helped: take the nominal step anyway (plain descent move)
        # so the search keeps moving; elimination handles any loss increase
        accepted = full_step
    state.config, state.F_warm, graph_accepted, loss_accepted = accepted
    state._graph_cache = (state.config, graph_accepted)
    state.config_loss = loss_accepted
    state.config_val_acc = accuracy(predict(state.F_warm), dataset.labels, split.validation)
    state._note_eval(state.config, state.config_loss, state.config_val_acc)
    delta = state.config.a - a_prev
    if np.max(np.abs(delta)) <= s.eps_conv * np.max(np.abs(a_prev)):
        state.converged = True
    return state


def run_until(state, dataset, split, iterations=None, seconds=None):
    """Run gradient steps until an iteration or wall-clock budget is spent.

    Resumable: successive calls continue from the stored state, and for
    iteration budgets run_until(s, b1); run_until(s, b2) matches a single
    run_until(s, b1 + b2).
    """
    if (iterations is None) == (seconds is None):
        raise ValueError("specify exactly one of iterations/seconds")
    start = time.monotonic()
    done = 0
    while not (state.converged or state.diverged):
        if iterations is not None and done >= iterations:
            break
        if seconds is not None and time.monotonic() - start >= seconds:
            break
        gradient_step(state, dataset, split)
        done += 1
    return state


def state_to_json(state):
    s = state.settings
    return {
        "config": {"k": state.config.k, "a": state.config.a.tolist()},
        "gamma": state.gamma,
        "a_floor": state.a_floor,
        "iteration": state.iteration,
        "loss_history": [[it, loss, acc] for it, loss, acc in state.loss_history],
        "f_warm": None if state.F_warm is None else state.F_warm.tolist(),
        "converged": state.converged,
        "diverged": state.diverged,
        "config_loss": state.config_loss,
        "config_val_acc": state.config_val_acc,
        "acc_best": state.acc_best,
        "settings": asdict(s),
    }


def state_from_json(obj):
    cfg = HyperConfig(k=int(obj["config"]["k"]), a=np.array(obj["config"]["a"], dtype=np.float64))
    f_warm = None if obj["f_warm"] is None else np.array(obj["f_warm"], dtype=np.float64)
    return OptimizerState(
        config=cfg,
        gamma=obj["gamma"],
        a_floor=obj["a_floor"],
        settings=OptimizerSettings(**obj["settings"]),
        iteration=int(obj["iteration"]),
        loss_history=[(int(it), float(loss), float(acc)) for it, loss, acc in obj["loss_history"]],
        F_warm=f_warm,
        converged=bool(obj["converged"]),
        diverged=bool(obj["diverged"]),
        config_loss=float(obj.get("config_loss", math.nan)),
        config_val_acc=float(obj.get("config_val_acc", math.nan)),
        acc_best=obj.get("acc_best"),
    )


def save_state(path, state):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state_to_json(state), fh)


def load_state(path):
    with open(path, encoding="utf-8") as fh:
        return state_from_json(json.load(fh))
