"""Vectorization helpers for quadratic-form least squares.

Conventions used everywhere in this package:

* ``vec`` stacks matrix columns, so ``vec(M)[j*rows + i] == M[i, j]``.
* Kronecker products of vectors follow ``numpy.kron``: for ``x`` of length n
  and ``u`` of length m, ``kron(x, u)[p*m + i] == x[p] * u[i]``.  Together
  with column stacking this gives ``vec(M) @ np.kron(x, u) == u @ M @ x``
  for an m-by-n matrix M.
* ``vecs(xi)`` lists the monomials ``xi_i * xi_j`` for i <= j in row-major
  upper-triangle order: ``xi_1^2, xi_1 xi_2, ..., xi_1 xi_n, xi_2^2, ...``.
* ``vech(F)`` lists the matching entries of a symmetric F with off-diagonal
  entries doubled, so ``vech(F) @ vecs(xi) == xi @ F @ xi`` holds exactly.
* ``gamma_of_K(K)`` maps second moments of x to second moments of K x:
  ``vecs(K @ x) == gamma_of_K(K) @ np.kron(x, x)``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, SymmetryError


def svec_len(n: int) -> int:
    """Number of entries in vecs/vech for dimension n."""
    return n * (n + 1) // 2


def svec_dim(length: int) -> int:
    """Inverse of :func:`svec_len`; raises if length is not triangular."""
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if svec_len(n) != length:
        raise DimensionError(f"length {length} is not n*(n+1)/2 for any integer n")
    return n


def triu_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i <= j, in the row-major order used by vecs/vech."""
    return np.triu_indices(n)


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(M).flatten("F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec` for a rows-by-cols matrix."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def vecs(x: np.ndarray) -> np.ndarray:
    """Upper-triangle monomials of a vector, batched over leading axes.

    For input of shape (..., n) the result has shape (..., n*(n+1)/2) and
    contains x_i * x_j for i <= j in row-major upper-triangle order.
    """
    x = np.asarray(x, dtype=float)
    i, j = triu_pairs(x.shape[-1])
    return x[..., i] * x[..., j]


def vech(F: np.ndarray) -> np.ndarray:
    """Half-vectorization with doubled off-diagonal entries.

    The matrix is symmetrized first; asymmetry beyond tolerance raises.
    """
    F = symmetrize(F)
    n = F.shape[0]
    i, j = triu_pairs(n)
    w = np.where(i == j, 1.0, 2.0)
    return w * F[i, j]


def unvech(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vech`; halves the off-diagonal slots."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError("unvech expects a one-dimensional array")
    n = svec_dim(v.size)
    i, j = triu_pairs(n)
    F = np.zeros((n, n))
    w = np.where(i == j, 1.0, 0.5)
    F[i, j] = w * v
    F[j, i] = F[i, j]
    return F


def gamma_of_K(K: np.ndarray) -> np.ndarray:
    """Matrix with rows kron(K[a], K[b]) for (a, b), a <= b, in vecs order.

    Satisfies vecs(K @ x) == gamma_of_K(K) @ np.kron(x, x) for every x, so
    interval moments of vecs(K x) follow from interval moments of kron(x, x).
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2:
        raise DimensionError("gamma_of_K expects a gain matrix")
    a, b = triu_pairs(K.shape[0])
    # row (a, b), column (p, l) holds K[a, p] * K[b, l]
    return (K[a, :, None] * K[b, None, :]).reshape(len(a), -1)


def symmetrize(S: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Validate symmetry of S and return (S + S.T) / 2.

    Tolerance is relative: max |S - S.T| must not exceed
    rtol * max(1, max |S|).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise DimensionError("matrix has non-finite entries")
    gap = np.abs(S - S.T).max() if S.size else 0.0
    scale = max(1.0, np.abs(S).max()) if S.size else 1.0
    if gap > rtol * scale:
        raise SymmetryError(
            f"matrix is not symmetric: max |S - S.T| = {gap:.3e} "
            f"exceeds {rtol:.1e} * {scale:.3e}"
        )
    return 0.5 * (S + S.T)
