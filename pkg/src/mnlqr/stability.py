"""System containers, the mean-square stability test, and Lyapunov solves.

The state equation is the linear Ito diffusion

    dx = (A x + B u) ds + (C x + D u) dw,

with a scalar Brownian motion w.  Under a static feedback u = K x the
closed loop is (Acl, Ccl) = (A + B K, C + D K) and the second moment
S(s) = E[x x.T] obeys d vec(S)/ds = L vec(S) with the generator

    L = I (x) Acl + Acl (x) I + Ccl (x) Ccl,

where (x) is the Kronecker product.  The loop is mean-square stable
exactly when every eigenvalue of L has negative real part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonStabilizingGainError, NumericalError
from .vecops import symmetrize, vec


def _as_matrix(M, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={M.ndim}")
    if not np.all(np.isfinite(M)):
        raise DimensionError(f"{name} has non-finite entries")
    if shape is not None and M.shape != shape:
        raise DimensionError(f"{name} must have shape {shape}, got {M.shape}")
    return M


@dataclass(frozen=True)
class SystemModel:
    """Coefficient matrices (A, B, C, D) of the controlled diffusion."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = _as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        C = _as_matrix(self.C, "C", (n, n))
        D = _as_matrix(self.D, "D", (n, m))
        for field, value in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, field, value)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ClosedLoop:
    """Drift and diffusion of the loop closed by a static gain."""

    Acl: np.ndarray
    Ccl: np.ndarray
    K: np.ndarray


def close_loop(model: SystemModel, K) -> ClosedLoop:
    K = _as_matrix(K, "K", (model.m, model.n))
    return ClosedLoop(Acl=model.A + model.B @ K, Ccl=model.C + model.D @ K, K=K)


def ms_generator(loop: ClosedLoop) -> np.ndarray:
    """Second-moment generator L of the closed loop, an n^2 x n^2 matrix."""
    n = loop.Acl.shape[0]
    eye = np.eye(n)
    return np.kron(eye, loop.Acl) + np.kron(loop.Acl, eye) + np.kron(loop.Ccl, loop.Ccl)


def ms_abscissa(loop: ClosedLoop) -> float:
    """Largest real part among the eigenvalues of the generator."""
    return float(np.max(np.linalg.eigvals(ms_generator(loop)).real))


def is_ms_stabilizing(model: SystemModel, K, margin: float = 1e-9) -> tuple[bool, float]:
    """Decide mean-square stability of u = K x.

    Returns the decision together with the spectral abscissa of the
    generator; the test requires the abscissa to clear a small negative
    margin so that boundary cases are rejected.  Eigenvalue failures from
    the backend propagate unchanged.
    """
    rho = ms_abscissa(close_loop(model, K))
    return rho < -margin, rho


def glyap_solve(loop: ClosedLoop, W, rtol: float = 1e-9) -> np.ndarray:
    """Solve the generalized Lyapunov equation of policy evaluation.

        Acl.T P + P Acl + Ccl.T P Ccl + W = 0

    W must be symmetric PSD-ish (it is symmetrized and validated).  The
    equation is solved in vectorized form through the transposed
    generator.  A generator with condition number above 1e12 means the
    loop sits at or beyond the mean-square stability boundary and raises
    :class:`NonStabilizingGainError`; a plug-back residual worse than
    rtol * max(1, |W|_F) raises :class:`NumericalError`.
    """
    W = symmetrize(W)
    n = loop.Acl.shape[0]
    if W.shape != (n, n):
        raise DimensionError(f"W must have shape {(n, n)}, got {W.shape}")
    eye = np.eye(n)
    At, Ct = loop.Acl.T, loop.Ccl.T
    op = np.kron(eye, At) + np.kron(At, eye) + np.kron(Ct, Ct)
    cond = np.linalg.cond(op)
    if not np.isfinite(cond) or cond > 1e12:
        raise NonStabilizingGainError(
            f"moment generator is numerically singular (cond = {cond:.3e}); "
            "the gain is at or beyond the mean-square stability boundary",
            gain=loop.K,
        )
    P = np.linalg.solve(op, -vec(W)).reshape((n, n), order="F")
    P = 0.5 * (P + P.T)
    residual = loop.Acl.T @ P + P @ loop.Acl + loop.Ccl.T @ P @ loop.Ccl + W
    bound = rtol * max(1.0, float(np.linalg.norm(W)))
    if float(np.linalg.norm(residual)) > bound:
        raise NumericalError(
            f"Lyapunov plug-back residual {np.linalg.norm(residual):.3e} "
            f"exceeds {bound:.3e}"
        )
    return P
