import numpy as np
import pytest

from pglearn import kernels
from pglearn.dataset import Dataset, inject_noise_features, sample_split
from pglearn.graph import HyperConfig, build_knn_graph


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay the JIT cost once so timed tests measure algorithm work
    kernels.warmup()


def make_blobs(n, d, c, seed, spread=3.0, within=1.0):
    """Gaussian class blobs: centers ~ N(0, spread^2 I), points ~ N(center, within^2 I)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(c, d))
    reps = [n // c + (1 if i < n % c else 0) for i in range(c)]
    labels = np.concatenate([np.full(r, i + 1) for i, r in enumerate(reps)])
    X = centers[labels - 1] + rng.normal(scale=within, size=(n, d))
    return Dataset(X, labels, c=c)


def make_noisy_blobs(n=300, d_inf=4, c=4, seed=0, spread=3.0):
    """Blobs plus an equal number of injected standard-normal noise dimensions."""
    data = make_blobs(n, d_inf, c, seed=seed, spread=spread)
    return inject_noise_features(data, 1.0, rng_seed=seed + 1000)


def make_structured_blobs(n=300, seed=0, coarse=3.0, fine=0.5, fine_within=0.18):
    """4-class Gaussian blobs with per-dimension structure.

    Dims 0-1 broadly separate classes {1,2} from {3,4}; dim 2 separates
    1 vs 2 and dim 3 separates 3 vs 4, both at a fine scale. Only a metric
    that stretches the fine dims (and mutes injected noise) resolves all
    four classes, which is the regime where learned per-dimension weights
    matter.
    """
    rng = np.random.default_rng(seed)
    reps = [n // 4 + (1 if i < n % 4 else 0) for i in range(4)]
    labels = np.concatenate([np.full(r, i + 1) for i, r in enumerate(reps)])
    n_tot = labels.size
    X = np.zeros((n_tot, 4))
    grp = np.where(labels <= 2, 1.0, -1.0)
    X[:, 0] = grp * coarse + rng.normal(scale=1.0, size=n_tot)
    X[:, 1] = grp * coarse + rng.normal(scale=1.0, size=n_tot)
    off2 = np.select([labels == 1, labels == 2], [fine, -fine], default=0.0)
    off3 = np.select([labels == 3, labels == 4], [fine, -fine], default=0.0)
    X[:, 2] = off2 + rng.normal(scale=fine_within, size=n_tot)
    X[:, 3] = off3 + rng.normal(scale=fine_within, size=n_tot)
    return Dataset(X, labels, c=4)


def random_graph(n, seed, d=3, k=None):
    """A real kNN graph over random points; returns (dataset, graph)."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    labels = rng.integers(1, 3, size=n)
    labels[:2] = [1, 2]  # ensure two classes
    data = Dataset(X, labels, c=2)
    if k is None:
        k = int(rng.integers(2, max(3, min(8, n - 1)) + 1))
    a = rng.uniform(0.05, 1.5, size=d)
    return data, build_knn_graph(data, HyperConfig(k=k, a=a))


@pytest.fixture
def tiny_blobs():
    data = make_blobs(60, 3, 3, seed=11)
    split = sample_split(data, 0.2, 0.5, rng_seed=5)
    return data, split
