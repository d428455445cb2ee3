"""Joint graph construction and semi-supervised label inference.

Learns per-dimension kernel bandwidths and kNN sparsity for graph-based
semi-supervised classification by descending a pairwise rank loss on a
validation set, driven by a parallel successive-elimination search.
"""

from .dataset import (Dataset, SplitSpec, build_label_matrix, inject_noise_features,
                      load_dataset, load_split, sample_split, save_split)
from .graph import (HyperConfig, SparseGraph, build_knn_graph, delta_x_on_pattern,
                    normalize, pair_weight)
from .objective import (GradientBundle, RankLoss, compute_omega, full_gradient,
                        grad_F, grad_loss, grad_P, rank_loss)
from .optimizer import (OptimizerSettings, OptimizerState, gradient_step, init_state,
                        load_state, run_until, save_state)
from .propagation import (SolutionMatrix, accuracy, lgc_direct_solve, lgc_power_solve,
                          predict, unreached)
from .scheduler import SchedulerConfig, get_top, num_rounds, pg_learn, round_duration
from .baselines import grid_search, random_search_d

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SplitSpec", "build_label_matrix", "inject_noise_features",
    "load_dataset", "load_split", "sample_split", "save_split",
    "HyperConfig", "SparseGraph", "build_knn_graph", "delta_x_on_pattern",
    "normalize", "pair_weight",
    "GradientBundle", "RankLoss", "compute_omega", "full_gradient",
    "grad_F", "grad_loss", "grad_P", "rank_loss",
    "OptimizerSettings", "OptimizerState", "gradient_step", "init_state",
    "load_state", "run_until", "save_state",
    "SolutionMatrix", "accuracy", "lgc_direct_solve", "lgc_power_solve",
    "predict", "unreached",
    "SchedulerConfig", "get_top", "num_rounds", "pg_learn", "round_duration",
    "grid_search", "random_search_d",
    "__version__",
]
