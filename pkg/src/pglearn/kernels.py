"""Hot numeric kernels with a numba lane and a pure-numpy fallback lane.

The numba lane is used when numba imports successfully and the environment
variable ``PGLEARN_DISABLE_NUMBA`` is unset/false. Both lanes compute the
same quantities; results may differ in the last ulp because summation
order differs. ``benchmarks/bench_kernels.py`` compares the two lanes.
"""

import os
from contextlib import contextmanager

import numpy as np
from scipy import sparse


def _env_disabled():
    return os.environ.get("PGLEARN_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")


_ENV_DISABLED = _env_disabled()  # snapshot at import; set_backend overrides at runtime


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

# None -> auto (numba when available and not disabled); "numba"/"numpy" -> forced.
_FORCED = None


def active_backend():
    """Name of the lane that will execute the kernels: "numba" or "numpy"."""
    if _FORCED is not None:
        return _FORCED
    if HAS_NUMBA and not _ENV_DISABLED:
        return "numba"
    return "numpy"


def set_backend(name):
    """Force a lane ("numba" or "numpy"), or None to restore auto-selection."""
    global _FORCED
    if name not in (None, "numba", "numpy"):
        raise ValueError("backend must be None, 'numba' or 'numpy'")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not available")
    _FORCED = name


@contextmanager
def use_backend(name):
    prev = _FORCED
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def _use_numba():
    return active_backend() == "numba"


# ---------------------------------------------------------------------------
# numba lane
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _sqdist_block_nb(X, a, start, stop, out):
    n, d = X.shape
    for bi in range(stop - start):
        i = start + bi
        for j in range(n):
            s = 0.0
            for m in range(d):
                diff = X[i, m] - X[j, m]
                s += a[m] * diff * diff
            out[bi, j] = s


@njit(nogil=True, cache=True)
def _csr_matmul_nb(indptr, indices, data, X, out):
    n = indptr.shape[0] - 1
    c = X.shape[1]
    for i in range(n):
        for col in range(c):
            out[i, col] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            w = data[p]
            for col in range(c):
                out[i, col] += w * X[j, col]


@njit(nogil=True, cache=True)
def _edge_rowsum_nb(indptr, vals, out):
    n = indptr.shape[0] - 1
    d = vals.shape[1]
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            for m in range(d):
                out[i, m] += vals[p, m]


@njit(nogil=True, cache=True)
def _edge_matmul_nb(indptr, indices, edge_vals, F, out):
    n = indptr.shape[0] - 1
    dm = edge_vals.shape[1]
    c = F.shape[1]
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            for m in range(dm):
                v = edge_vals[p, m]
                for col in range(c):
                    out[i, m, col] += v * F[j, col]


# ---------------------------------------------------------------------------
# numpy lane
# ---------------------------------------------------------------------------

def _sqdist_block_np(X, a, start, stop, out):
    diff = X[start:stop, None, :] - X[None, :, :]
    np.matmul(diff * diff, a, out=out)


def _csr_matmul_np(indptr, indices, data, X, out):
    n = indptr.shape[0] - 1
    P = sparse.csr_matrix((data, indices, indptr), shape=(n, n), copy=False)
    out[:] = P @ X


def _edge_rowsum_np(indptr, vals, out):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    np.add.at(out, rows, vals)


def _edge_matmul_np(indptr, indices, edge_vals, F, out):
    n = indptr.shape[0] - 1
    for m in range(edge_vals.shape[1]):
        Pm = sparse.csr_matrix((edge_vals[:, m], indices, indptr), shape=(n, n), copy=False)
        out[:, m, :] = Pm @ F


# ---------------------------------------------------------------------------
# dispatching API
# ---------------------------------------------------------------------------

def sqdist_block(X, a, start, stop):
    """Weighted squared distances sum_m a_m (x_im - x_jm)^2 for i in [start, stop)."""
    out = np.empty((stop - start, X.shape[0]))
    if _use_numba():
        _sqdist_block_nb(X, a, start, stop, out)
    else:
        _sqdist_block_np(X, a, start, stop, out)
    return out


def csr_dense_matmul(P, X):
    """P @ X for csr matrix P and dense 2-d X."""
    out = np.empty((P.shape[0], X.shape[1]))
    if _use_numba():
        _csr_matmul_nb(P.indptr, P.indices, P.data, X, out)
    else:
        _csr_matmul_np(P.indptr, P.indices, P.data, X, out)
    return out


def edge_rowsum(indptr, vals):
    """Per-node sums of an edge tensor laid out in csr order: out[i] = sum_p vals[p]."""
    out = np.zeros((indptr.shape[0] - 1, vals.shape[1]))
    if _use_numba():
        _edge_rowsum_nb(indptr, vals, out)
    else:
        _edge_rowsum_np(indptr, vals, out)
    return out


def edge_matmul(indptr, indices, edge_vals, F):
    """out[i, m] = sum_j M_m[i, j] F[j] where M_m has edge_vals[:, m] on the csr pattern."""
    out = np.zeros((indptr.shape[0] - 1, edge_vals.shape[1], F.shape[1]))
    if _use_numba():
        _edge_matmul_nb(indptr, indices, edge_vals, F, out)
    else:
        _edge_matmul_np(indptr, indices, edge_vals, F, out)
    return out


def warmup():
    """Trigger JIT compilation of the numba lane on tiny inputs."""
    if not (HAS_NUMBA and active_backend() == "numba"):
        return
    X = np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]])
    a = np.array([1.0, 1.0])
    sqdist_block(X, a, 0, 3)
    P = sparse.csr_matrix(np.array([[0.0, 0.5, 0.0], [0.5, 0.0, 0.25], [0.0, 0.25, 0.0]]))
    F = np.ones((3, 2))
    csr_dense_matmul(P, F)
    vals = np.ones((P.nnz, 2))
    edge_rowsum(P.indptr, vals)
    edge_matmul(P.indptr, P.indices, vals, F)
