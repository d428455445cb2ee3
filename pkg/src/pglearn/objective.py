"""Pairwise learning-to-rank validation loss and its gradient in the bandwidths.

The loss sums -log sigmoid(F_vc' - F_v'c') over ordered cross-class validation
pairs. Its gradient with respect to the per-dimension weights a chains through
the edge weights (Omega = dW/da = -W * DeltaX), the normalized matrix
(dP/da, evaluated only on the stored edges), and the diffusion solution
(dF/da_m from (I + alpha L) dF/da_m = alpha dP/da_m F).

All edge tensors share W's sparsity pattern, so a full gradient touches
O(e d) entries; nothing dense in n^2 is ever materialized here.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)


@dataclass
class RankLoss:
    value: float
    pair_count: int


@dataclass
class GradientBundle:
    """Edge tensors (csr-ordered, (e, d)) and the assembled d-vector gradient."""

    omega: np.ndarray
    dP_da: np.ndarray
    dg_da: np.ndarray


def neg_log_sigmoid(x):
    """-log sigmoid(x) = log(1 + exp(-x)), overflow-safe for any sign of x."""
    return np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _validation_groups(split, truth, c):
    """Per class c', the validation members of c' and the rest of the validation set."""
    val = np.asarray(split.validation)
    groups = []
    for cp in range(1, c + 1):
        mine = val[truth[val] == cp]
        rest = val[truth[val] != cp]
        groups.append((cp, mine, rest))
    return groups


def rank_loss(F, split, truth):
    """Total -log sigmoid margin over ordered cross-class validation pairs."""
    F = np.asarray(F)
    c = F.shape[1]
    value = 0.0
    pair_count = 0
    for cp, mine, rest in _validation_groups(split, truth, c):
        if mine.size == 0 or rest.size == 0:
            continue
        margins = F[mine, cp - 1][:, None] - F[rest, cp - 1][None, :]
        value += float(neg_log_sigmoid(margins).sum())
        pair_count += mine.size * rest.size
    if pair_count == 0:
        raise ValueError("degenerate validation set: no cross-class pairs")
    return RankLoss(value=value, pair_count=pair_count)


def compute_omega(w, delta_x):
    """dW/da per stored edge: Omega_ij = -W_ij * DeltaX_ij, shape (e, d)."""
    w = np.asarray(w)
    return -w[:, None] * delta_x


def grad_P(graph, omega):
    """dP/da on W's stored edges, shape (e, d).

    Per edge (i, j):
      dP_ij = Omega_ij * P_ij/W_ij
              - (W_ij/2) (P_ij/W_ij)^3 (d_i * s_j + d_j * s_i)
    where s_i = sum_n Omega_in is accumulated once per node in O(e d).
    """
    w = graph.W.data
    p = graph.P.data
    deg = graph.degrees
    rows, cols = graph.rows, graph.cols

    s = kernels.edge_rowsum(graph.W.indptr, omega)  # (n, d) row sums of Omega
    ratio = p / w
    lead = omega * ratio[:, None]
    coef = 0.5 * w * ratio**3
    cross = deg[rows, None] * s[cols] + deg[cols, None] * s[rows]
    return lead - coef[:, None] * cross


def _auto_chunk(e, d, n, c):
    # cap the dense per-chunk buffers at roughly the edge-tensor footprint e*d
    return int(np.clip((e * d) // max(n * c, 1), 1, d))


def grad_F(P, F, dP_da, mu, tol=1e-6, max_iter=1000, dims_chunk=None):
    """Solve (I + alpha L) dF/da_m = alpha dP/da_m F for every dimension m.

    Uses the damped fixed point X <- mu P X + mu (dP/da_m F) started from zero;
    dimensions are processed in chunks so peak memory stays near the edge-tensor
    footprint. Returns an array of shape (d, n, c).
    """
    F = np.asarray(F)
    n, c = F.shape
    e, d = dP_da.shape
    if dims_chunk is None:
        dims_chunk = _auto_chunk(e, d, n, c)
    out = np.empty((d, n, c))
    worst = 0.0
    for lo in range(0, d, dims_chunk):
        hi = min(d, lo + dims_chunk)
        chunk = hi - lo
        B = kernels.edge_matmul(P.indptr, P.indices, np.ascontiguousarray(dP_da[:, lo:hi]), F)
        B = B.reshape(n, chunk * c)  # column block m*c:(m+1)*c belongs to dimension lo+m
        X = np.zeros_like(B)
        residual = np.inf
        for _ in range(max_iter):
            X_next = mu * (kernels.csr_dense_matmul(P, X) + B)
            residual = float(np.max(np.abs(X_next - X)))
            X = X_next
            if residual <= tol:
                break
        worst = max(worst, residual)
        out[lo:hi] = X.reshape(n, chunk, c).transpose(1, 0, 2)
    if worst > tol:
        logger.warning("grad_F stopped at max_iter=%d with residual %.3e > tol %.3e",
                       max_iter, worst, tol)
    return out


def _pair_coefficients(F, split, truth):
    """Matrix C with dg/da_m = sum_ij C_ij dF_m[i, j]; shares rank_loss's pairs."""
    F = np.asarray(F)
    c = F.shape[1]
    C = np.zeros_like(F)
    pair_count = 0
    for cp, mine, rest in _validation_groups(split, truth, c):
        if mine.size == 0 or rest.size == 0:
            continue
        margins = F[mine, cp - 1][:, None] - F[rest, cp - 1][None, :]
        o_minus_1 = _sigmoid(margins) - 1.0
        np.add.at(C[:, cp - 1], mine, o_minus_1.sum(axis=1))
        np.add.at(C[:, cp - 1], rest, -o_minus_1.sum(axis=0))
        pair_count += mine.size * rest.size
    if pair_count == 0:
        raise ValueError("degenerate validation set: no cross-class pairs")
    return C


def grad_loss(F, dF_da, split, truth):
    """Assemble dg/da_m = sum_pairs (o_vv' - 1)(dF_m[v, c'] - dF_m[v', c'])."""
    C = _pair_coefficients(F, split, truth)
    return np.tensordot(dF_da, C, axes=([1, 2], [0, 1]))


def full_gradient(graph, delta_x, F, split, truth, mu,
                  tol=1e-6, max_iter=1000, dims_chunk=None):
    """Chain the whole pipeline: Omega -> dP/da -> dF/da -> dg/da."""
    omega = compute_omega(graph.W.data, delta_x)
    dP_da = grad_P(graph, omega)
    dF_da = grad_F(graph.P, F, dP_da, mu, tol=tol, max_iter=max_iter, dims_chunk=dims_chunk)
    dg_da = grad_loss(F, dF_da, split, truth)
    return GradientBundle(omega=omega, dP_da=dP_da, dg_da=dg_da)
