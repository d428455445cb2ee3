"""Weighted kNN graph construction under per-dimension bandwidths.

Edge weights follow exp(-sum_m a_m (x_im - x_jm)^2) with a_m = 1/sigma_m^2,
sparsified by union-kNN: an undirected edge exists when either endpoint is
among the other's k nearest under the a-weighted squared distance.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernels

# Edges whose weight underflows below this are dropped; keeps P free of
# divisions by zero without distorting any representable weight.
W_FLOOR = 1e-300


@dataclass(frozen=True)
class HyperConfig:
    """One hyperparameter configuration: neighbor count k and weight vector a."""

    k: int
    a: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.a, dtype=np.float64))
        object.__setattr__(self, "a", a)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if a.ndim != 1 or a.size < 1:
            raise ValueError("a must be a 1-d vector")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("a must be finite and nonnegative")


@dataclass(frozen=True)
class SparseGraph:
    """Symmetric kNN-sparse weight matrix with degrees and normalized matrix P.

    ``rows``/``cols`` list the stored (directed) entries in csr order; W and P
    share that sparsity pattern exactly.
    """

    W: sparse.csr_matrix
    P: sparse.csr_matrix
    degrees: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    config: HyperConfig

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def edge_count(self):
        return self.W.nnz

    @property
    def isolated(self):
        return self.degrees == 0.0


class NeighborIndex:
    """Interface for k-nearest-neighbor queries under a weighted squared distance.

    Implementations return, for every point, the k nearest other points.
    Swappable so that approximate backends (e.g. hashing-based) can replace
    the exact one on large inputs.
    """

    def query(self, a, k):
        """Return an (n, k) int array; row i holds i's k nearest neighbors."""
        raise NotImplementedError


class ExactNeighborIndex(NeighborIndex):
    """Exact kNN by per-node selection over all pairwise weighted distances.

    Distance ties at the k-th neighbor break toward the lower point index so
    results are reproducible.
    """

    def __init__(self, features):
        self.features = np.ascontiguousarray(features, dtype=np.float64)

    def query(self, a, k):
        X = self.features
        n = X.shape[0]
        if not 1 <= k <= n - 1:
            raise ValueError(f"k must lie in [1, n-1], got k={k}, n={n}")
        a = np.ascontiguousarray(a, dtype=np.float64)
        block = max(1, int(4_000_000 // max(n, 1)))
        out = np.empty((n, k), dtype=np.int64)
        order_idx = np.broadcast_to(np.arange(n), (block, n))
        for start in range(0, n, block):
            stop = min(n, start + block)
            dist = kernels.sqdist_block(X, a, start, stop)
            dist[np.arange(stop - start), np.arange(start, stop)] = np.inf  # exclude self
            order = np.lexsort((order_idx[: stop - start], dist), axis=-1)
            out[start:stop] = order[:, :k]
        return out


def pair_weight(x_i, x_j, a):
    """Kernel weight exp(-sum_m a_m (x_im - x_jm)^2) in (0, 1]."""
    diff = np.asarray(x_i, dtype=np.float64) - np.asarray(x_j, dtype=np.float64)
    return float(np.exp(-np.dot(diff * diff, np.asarray(a, dtype=np.float64))))


def edge_weights(features, a, rows, cols):
    """Kernel weights for an explicit edge list; the canonical weight path."""
    diff = features[rows] - features[cols]
    return np.exp(-((diff * diff) @ a))


def build_knn_graph(dataset, config, index=None, w_floor=W_FLOOR):
    """Construct the union-kNN graph for one hyperparameter configuration.

    Nodes whose every incident weight underflows below ``w_floor`` end up
    isolated (zero P row/column) rather than raising.
    """
    X = dataset.features
    n = X.shape[0]
    if config.a.size != X.shape[1]:
        raise ValueError("config.a length must equal the dataset dimensionality")
    if index is None:
        index = ExactNeighborIndex(X)
    neigh = index.query(config.a, config.k)
    k = neigh.shape[1]

    r0 = np.repeat(np.arange(n), k)
    c0 = neigh.ravel()
    ones = np.ones(r0.size, dtype=np.int8)
    A = sparse.csr_matrix((ones, (r0, c0)), shape=(n, n))
    pattern = A + A.T  # union of directed selections
    pattern.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(pattern.indptr))
    cols = pattern.indices.astype(np.int64)

    w = edge_weights(X, config.a, rows, cols)
    keep = w >= w_floor
    if not np.all(keep):
        rows, cols, w = rows[keep], cols[keep], w[keep]
    W = sparse.csr_matrix((w, (rows, cols)), shape=(n, n))
    W.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(W.indptr))
    cols = W.indices.astype(np.int64)

    degrees = np.asarray(W.sum(axis=1)).ravel()
    P = normalize(W, degrees)
    return SparseGraph(W=W, P=P, degrees=degrees, rows=rows, cols=cols, config=config)


def normalize(W, degrees):
    """P = D^{-1/2} W D^{-1/2} on W's sparsity pattern; isolated rows stay zero."""
    W = W.tocsr()
    n = W.shape[0]
    rows = np.repeat(np.arange(n), np.diff(W.indptr))
    cols = W.indices
    sq = np.sqrt(degrees)
    data = W.data / (sq[rows] * sq[cols])
    P = sparse.csr_matrix((data, W.indices.copy(), W.indptr.copy()), shape=W.shape)
    return P


def delta_x_on_pattern(dataset, graph):
    """Per-edge squared feature differences (x_i - x_j)^2, csr-ordered, (e, d).

    Only stored edges are materialized, so memory stays O(e d) instead of the
    dense n^2 d tensor.
    """
    X = dataset.features
    diff = X[graph.rows] - X[graph.cols]
    return diff * diff


def dump_edges(graph, path):
    """Debug dump: one "i j w" line per stored directed entry, full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, w in zip(graph.rows, graph.cols, graph.W.data):
            fh.write(f"{i} {j} {float(w)!r}\n")
