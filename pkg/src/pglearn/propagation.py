"""Label diffusion: damped power iteration F <- mu P F + (1-mu) Y.

The fixed point solves (I + alpha L) F = Y with L = I - P and
mu = alpha / (1 + alpha). A dense direct solve is provided as a test oracle.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse

from . import kernels

DEFAULT_MU = 0.99  # alpha = 99
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 1000


@dataclass
class SolutionMatrix:
    """Diffusion output F plus convergence bookkeeping."""

    F: np.ndarray
    iterations_used: int
    residual: float
    residual_history: list | None = None


def lgc_power_solve(P, Y, mu=DEFAULT_MU, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                    F0=None, track_residuals=False):
    """Iterate F <- mu P F + (1-mu) Y until the infinity-norm update <= tol.

    ``F0`` warm-starts the iteration. Hitting ``max_iter`` is reported through
    the returned residual, not raised.
    """
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    Y = np.asarray(Y, dtype=np.float64)
    F = np.zeros_like(Y) if F0 is None else np.array(F0, dtype=np.float64)
    base = (1.0 - mu) * Y
    history = [] if track_residuals else None
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        F_next = mu * kernels.csr_dense_matmul(P, F) + base
        residual = float(np.max(np.abs(F_next - F))) if F_next.size else 0.0
        F = F_next
        if history is not None:
            history.append(residual)
        if residual <= tol:
            break
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite values in diffusion solve (malformed P?)")
    return SolutionMatrix(F=F, iterations_used=it, residual=residual, residual_history=history)


def lgc_direct_solve(W, Y, alpha):
    """Dense oracle: solve (I + alpha L) F = Y by factorization. Enforces n <= 2000."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if sparse.issparse(W):
        W = W.toarray()
    W = np.asarray(W, dtype=np.float64)
    n = W.shape[0]
    if n > 2000:
        raise ValueError("direct solve is a small-instance oracle (n <= 2000)")
    deg = W.sum(axis=1)
    inv_sq = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    P = inv_sq[:, None] * W * inv_sq[None, :]
    A = (1.0 + alpha) * np.eye(n) - alpha * P  # I + alpha (I - P)
    F = linalg.solve(A, np.asarray(Y, dtype=np.float64), assume_a="pos")
    mu = alpha / (1.0 + alpha)
    residual = float(np.max(np.abs(mu * (P @ F) + (1 - mu) * Y - F)))
    return SolutionMatrix(F=F, iterations_used=0, residual=residual)


def predict(F):
    """Argmax readout to class labels 1..c; ties break toward the lower class index."""
    F = np.asarray(F)
    if not np.all(np.isfinite(F)):
        raise ValueError("non-finite scores")
    return np.argmax(F, axis=1) + 1


def unreached(F):
    """Mask of all-zero rows: points the diffusion never reached (predicted class 1)."""
    return ~np.any(np.asarray(F) != 0.0, axis=1)


def accuracy(predictions, truth, subset):
    """Fraction of matching labels over an index subset."""
    subset = np.asarray(subset)
    if subset.size == 0:
        raise ValueError("empty evaluation subset")
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    return float(np.mean(predictions[subset] == truth[subset]))
