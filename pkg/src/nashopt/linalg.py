"""Small dense linear-algebra helpers shared by the solvers.

Everything here operates on plain float64 numpy arrays. Vectors are 1-D
arrays, matrices 2-D; gradient matrices store one task gradient per column.
"""

from functools import lru_cache

import numpy as np

from .errors import ContractError, ShapeError, SingularityError

__all__ = ["gram", "smallest_singular_value", "solve_spd", "as_matrix", "as_vector"]


def as_vector(x, name="vector"):
    """Coerce to a finite 1-D float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name}: expected 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name}: non-finite entries")
    return v


def as_matrix(x, name="matrix"):
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name}: non-finite entries")
    return m


@lru_cache(maxsize=64)
def _strict_upper_indices(n):
    iu = np.triu_indices(n, k=1)
    return iu, (iu[1], iu[0])


def gram(G):
    """Return the K x K matrix of pairwise column inner products of ``G``.

    The result is exactly symmetric: each unordered pair is computed once
    and mirrored.
    """
    G = as_matrix(G, "G")
    S = G.T @ G
    # mirror the upper triangle so S[i, j] is bit-identical to S[j, i]
    iu, il = _strict_upper_indices(S.shape[0])
    S[il] = S[iu]
    return S


def smallest_singular_value(M, sym_tol=1e-10):
    """Smallest singular value of a symmetric PSD matrix.

    For a PSD matrix this equals the smallest eigenvalue; a symmetric
    eigensolver is used, so the accuracy is at LAPACK level (well below
    1e-9 relative for K <= 64).
    """
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ShapeError(f"M must be square, got {M.shape}")
    scale = np.max(np.abs(M)) or 1.0
    if np.max(np.abs(M - M.T)) > sym_tol * scale:
        raise ContractError("M is not symmetric within tolerance")
    eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
    return float(np.min(np.abs(eigs)))


def solve_spd(M, b):
    """Solve M x = b for symmetric positive-definite M via Cholesky.

    Raises SingularityError (with the failing pivot index) when M is not
    positive definite. One step of iterative refinement keeps the residual
    within 1e-10 * (1 + ||b||_inf) for reasonably conditioned systems.
    """
    M = as_matrix(M, "M")
    b = as_vector(b, "b")
    K = M.shape[0]
    if M.shape[1] != K or b.shape[0] != K:
        raise ShapeError(f"shape mismatch: M {M.shape}, b {b.shape}")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularityError(
            "matrix is not positive definite", pivot=_failing_pivot(M)
        ) from None
    y = np.linalg.solve(L, b)
    x = np.linalg.solve(L.T, y)
    r = b - M @ x
    y = np.linalg.solve(L, r)
    x = x + np.linalg.solve(L.T, y)
    return x


def _failing_pivot(M):
    """Index of the first non-positive Cholesky pivot (for error reporting)."""
    A = M.copy()
    n = A.shape[0]
    for j in range(n):
        d = A[j, j]
        if d <= 0.0 or not np.isfinite(d):
            return j
        A[j, j] = np.sqrt(d)
        if j + 1 < n:
            A[j + 1 :, j] /= A[j, j]
            A[j + 1 :, j + 1 :] -= np.outer(A[j + 1 :, j], A[j + 1 :, j])
    return n - 1
