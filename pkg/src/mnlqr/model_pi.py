"""Model-based policy iteration for the multiplicative-noise LQ problem.

Each sweep evaluates the current gain by solving the generalized Lyapunov
equation

    P (A + B K) + (A + B K).T P + Q + (C + D K).T P (C + D K) + K.T R K = 0

and improves the gain through

    K_next = -(R + D.T P D)^{-1} (B.T P + D.T P C).

Started from a mean-square stabilizer the iteration converges to the
stabilizing solution of the stochastic algebraic Riccati equation; it is
the ground-truth oracle against which the data-driven solver is checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DefinitenessError,
    DimensionError,
    IndefiniteCurvatureError,
    NonStabilizingGainError,
)
from .stability import SystemModel, close_loop, glyap_solve, is_ms_stabilizing
from .vecops import symmetrize


@dataclass(frozen=True)
class CostWeights:
    """Quadratic state and input weights; Q must be PSD and R PD."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = symmetrize(self.Q)
        R = symmetrize(self.R)
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise DefinitenessError("R must be positive definite")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise DefinitenessError("Q must be positive semidefinite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class EvaluationTriple:
    """Value matrix P with its companion blocks M = B.T P + D.T P C, H = D.T P D."""

    P: np.ndarray
    M: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class IterationRecord:
    index: int
    triple: EvaluationTriple
    K: np.ndarray
    K_next: np.ndarray
    delta_P: float
    sare_res: float
    eval_res: float
    ms_abscissa: float


@dataclass(frozen=True)
class ModelPIResult:
    status: str  # "converged" or "max-iterations"
    iterations: tuple[IterationRecord, ...]
    P: np.ndarray
    K: np.ndarray

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def policy_eval(model: SystemModel, cost: CostWeights, K) -> EvaluationTriple:
    """Evaluate gain K: solve for P and form the (P, M, H) triple.

    K must be mean-square stabilizing; otherwise the evaluation equation
    has no meaningful solution and :class:`NonStabilizingGainError` is
    raised with the offending gain and abscissa attached.
    """
    K = np.asarray(K, dtype=float)
    if cost.Q.shape != (model.n, model.n) or cost.R.shape != (model.m, model.m):
        raise DimensionError("cost weights do not match the system dimensions")
    stable, rho = is_ms_stabilizing(model, K)
    if not stable:
        raise NonStabilizingGainError(
            f"gain is not mean-square stabilizing (abscissa {rho:.6g} >= 0)",
            gain=K,
            abscissa=rho,
        )
    P = glyap_solve(close_loop(model, K), cost.Q + K.T @ cost.R @ K)
    M = model.B.T @ P + model.D.T @ P @ model.C
    H = 0.5 * (model.D.T @ P @ model.D + (model.D.T @ P @ model.D).T)
    return EvaluationTriple(P=P, M=M, H=H)


def policy_improve(cost: CostWeights, triple: EvaluationTriple) -> np.ndarray:
    """Gain update K_next = -(R + H)^{-1} M through an SPD solve."""
    G = cost.R + triple.H
    try:
        cf = scipy.linalg.cho_factor(0.5 * (G + G.T))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises its own
        raise IndefiniteCurvatureError(f"R + H is not positive definite: {exc}") from exc
    except scipy.linalg.LinAlgError as exc:
        raise IndefiniteCurvatureError(f"R + H is not positive definite: {exc}") from exc
    return -scipy.linalg.cho_solve(cf, triple.M)


def sare_residual(model: SystemModel, cost: CostWeights, P) -> float:
    """Frobenius norm of the Riccati-equation left side at P.

    The equation is P A + A.T P + C.T P C + Q
    - (P B + C.T P D)(R + D.T P D)^{-1}(B.T P + D.T P C).
    """
    P = symmetrize(P)
    A, B, C, D = model.A, model.B, model.C, model.D
    G = cost.R + D.T @ P @ D
    S = P @ B + C.T @ P @ D
    try:
        cf = scipy.linalg.cho_factor(0.5 * (G + G.T))
    except scipy.linalg.LinAlgError as exc:
        raise IndefiniteCurvatureError(f"R + D.T P D is not positive definite: {exc}") from exc
    res = P @ A + A.T @ P + C.T @ P @ C + cost.Q - S @ scipy.linalg.cho_solve(cf, S.T)
    return float(np.linalg.norm(res))


def eval_residual(model: SystemModel, cost: CostWeights, P, K) -> float:
    """Frobenius norm of the policy-evaluation left side at (P, K)."""
    P = symmetrize(P)
    K = np.asarray(K, dtype=float)
    loop = close_loop(model, K)
    res = (
        P @ loop.Acl
        + loop.Acl.T @ P
        + cost.Q
        + loop.Ccl.T @ P @ loop.Ccl
        + K.T @ cost.R @ K
    )
    return float(np.linalg.norm(res))


def run_model_pi(
    model: SystemModel,
    cost: CostWeights,
    K0,
    eps: float = 1e-10,
    max_iter: int = 200,
) -> ModelPIResult:
    """Iterate evaluation and improvement from the stabilizer K0.

    Stops when the Frobenius change between consecutive P iterates falls
    below eps, or after max_iter sweeps (reported as status
    "max-iterations", not an exception).  A gain that loses mean-square
    stability mid-run aborts with the offending iteration attached.
    """
    if eps < 0:
        raise DimensionError("eps must be nonnegative")
    K = np.asarray(K0, dtype=float)
    records: list[IterationRecord] = []
    P_prev = None
    status = "max-iterations"
    for i in range(max_iter):
        try:
            triple = policy_eval(model, cost, K)
        except NonStabilizingGainError as exc:
            raise NonStabilizingGainError(
                f"iteration {i}: {exc}", gain=K, abscissa=exc.abscissa, iteration=i
            ) from exc
        K_next = policy_improve(cost, triple)
        _, rho = is_ms_stabilizing(model, K)
        delta = float("inf") if P_prev is None else float(np.linalg.norm(triple.P - P_prev))
        records.append(
            IterationRecord(
                index=i,
                triple=triple,
                K=K,
                K_next=K_next,
                delta_P=delta,
                sare_res=sare_residual(model, cost, triple.P),
                eval_res=eval_residual(model, cost, triple.P, K),
                ms_abscissa=rho,
            )
        )
        if delta < eps:
            status = "converged"
            break
        P_prev = triple.P
        K = K_next
    last = records[-1]
    return ModelPIResult(status=status, iterations=tuple(records), P=last.triple.P, K=last.K_next)
