"""Data-driven policy iteration from interval-expectation matrices.

Each iteration evaluates the current gain K by least squares instead of
a generalized Lyapunov solve.  Integrating d(x' P x) along behavior
trajectories u = K0 x + e(s) and eliminating the model matrices yields,
for every grid interval, one linear equation in the unknowns
(vech(P), vec(M), vech(H)):

    eta_xbar vech(P) + [2 eta_xx (I kron K') - 2 eta_xu] vec(M)
                     + [eta_Kx - eta_ubar] vech(H)
        = -eta_xx vec(Q + K' R K)

where M and H parametrize the improvement K_next = -(R + H)^-1 M.  The
data matrices are collected once; only the K-dependent reshuffles above
are rebuilt per iteration.  A rank condition on [eta_xx, eta_xu,
eta_ubar] guarantees the stacked system determines all unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .datagen import DataMatrices, eta_Kx
from .errors import (
    DimensionError,
    IndefiniteCurvatureError,
    RankConditionError,
)
from .model_pi import CostWeights, EvaluationTriple, policy_improve
from .vecops import svec_len, unvec, unvech, vec

# Relative singular-value cutoff shared by the rank check and the
# least-squares solve.
RANK_RCOND = 1e-8


@dataclass(frozen=True)
class RankReport:
    """Outcome of the data informativity check."""

    rank: int
    required: int
    threshold: float
    singular_values: np.ndarray

    @property
    def passed(self) -> bool:
        return self.rank >= self.required

    def __str__(self) -> str:
        verdict = "passes" if self.passed else "FAILS"
        return (
            f"data rank {self.rank} (required {self.required}, threshold "
            f"{self.threshold:.3e}) {verdict}"
        )


@dataclass(frozen=True)
class RegressionSystem:
    """One iteration's stacked least-squares system."""

    psi: np.ndarray
    theta: np.ndarray
    K: np.ndarray
    cond: float
    iteration: int | None = None


@dataclass(frozen=True)
class ADPIterationRecord:
    """Everything one data-driven iteration produced."""

    index: int
    triple: EvaluationTriple
    K: np.ndarray
    K_next: np.ndarray
    delta_P: float
    cond_psi: float
    ls_rank: int
    ls_residual: float


@dataclass(frozen=True)
class ADPResult:
    """Terminal state of a data-driven policy-iteration run."""

    status: str  # "converged" or "max-iterations"
    iterations: tuple[ADPIterationRecord, ...]
    P: np.ndarray
    K: np.ndarray
    rank_report: RankReport

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def check_rank(data: DataMatrices) -> RankReport:
    """Informativity of the collected data, by singular values.

    The stacked block [eta_xx, eta_xu, eta_ubar] must have full column
    rank n(n+1)/2 + n m + m(m+1)/2 for the per-iteration systems to be
    solvable at every gain.  Singular values below RANK_RCOND times the
    largest do not count.
    """
    block = np.hstack([data.eta_xx, data.eta_xu, data.eta_ubar])
    sv = np.linalg.svd(block, compute_uv=False)
    threshold = RANK_RCOND * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > threshold))
    required = svec_len(data.n) + data.n * data.m + svec_len(data.m)
    return RankReport(
        rank=rank, required=required, threshold=float(threshold), singular_values=sv
    )


def assemble(data: DataMatrices, K, cost: CostWeights) -> RegressionSystem:
    """Build the stacked system for evaluating gain K on this data."""
    K = np.asarray(K, dtype=float)
    if K.shape != (data.m, data.n):
        raise DimensionError(f"K must have shape {(data.m, data.n)}, got {K.shape}")
    if cost.Q.shape[0] != data.n or cost.R.shape[0] != data.m:
        raise DimensionError(
            f"cost weights sized for (n, m) = ({cost.Q.shape[0]}, "
            f"{cost.R.shape[0]}), data is ({data.n}, {data.m})"
        )
    mid = 2.0 * data.eta_xx @ np.kron(np.eye(data.n), K.T) - 2.0 * data.eta_xu
    tail = eta_Kx(data, K) - data.eta_ubar
    psi = np.hstack([data.eta_xbar, mid, tail])
    theta = -(data.eta_xx @ vec(cost.Q + K.T @ cost.R @ K))
    return RegressionSystem(psi=psi, theta=theta, K=K, cond=float(np.linalg.cond(psi)))


def solve_ls(system: RegressionSystem) -> tuple[EvaluationTriple, dict]:
    """Least-squares evaluation; returns the (P, M, H) triple and solve info.

    Uses an orthogonal-factorization solver with relative cutoff
    RANK_RCOND.  A numerically rank-deficient system raises
    RankConditionError carrying the singular values.
    """
    n_p = system.psi.shape[1]
    sol, res, rank, sv = np.linalg.lstsq(system.psi, system.theta, rcond=RANK_RCOND)
    if rank < n_p:
        report = RankReport(
            rank=int(rank),
            required=n_p,
            threshold=float(RANK_RCOND * (sv[0] if sv.size else 0.0)),
            singular_values=sv,
        )
        raise RankConditionError(
            f"iteration system is rank deficient ({rank} of {n_p}); "
            "the exploration signal does not excite enough directions",
            report=report,
        )
    # infer n and m back from the slot sizes
    total = n_p
    n = system.K.shape[1]
    m = system.K.shape[0]
    lp, lm = svec_len(n), n * m
    if lp + lm + svec_len(m) != total:
        raise DimensionError("system column count does not match gain dimensions")
    P = unvech(sol[:lp])
    M = unvec(sol[lp : lp + lm], m, n)
    H = unvech(sol[lp + lm :])
    residual = float(np.sqrt(res[0])) if res.size else float(
        np.linalg.norm(system.psi @ sol - system.theta)
    )
    info = {"rank": int(rank), "residual": residual, "cond": system.cond}
    return EvaluationTriple(P=P, M=M, H=0.5 * (H + H.T)), info


def run_adp(data: DataMatrices, cost: CostWeights, K0,
            eps: float = 1e-8, max_iter: int = 200) -> ADPResult:
    """Policy iteration driven entirely by collected data.

    Checks data informativity once, then alternates least-squares
    evaluation with the gain update K_next = -(R + H)^-1 M until the
    evaluated quadratic kernel moves less than eps in Frobenius norm or
    max_iter is reached.  An indefinite estimated curvature R + H stops
    the run with IndefiniteCurvatureError: with Monte Carlo data that
    usually means sampling noise has overwhelmed the rank margin.
    """
    K = np.asarray(K0, dtype=float)
    if K.shape != (data.m, data.n):
        raise DimensionError(f"K0 must have shape {(data.m, data.n)}, got {K.shape}")
    if max_iter < 1:
        raise DimensionError(f"max_iter must be >= 1, got {max_iter}")
    report = check_rank(data)
    if not report.passed:
        raise RankConditionError(
            "collected data fails the informativity rank condition "
            f"({report.rank} < {report.required}); add exploration or data",
            report=report,
        )
    records: list[ADPIterationRecord] = []
    prev_P = None
    status = "max-iterations"
    for i in range(max_iter):
        system = replace(assemble(data, K, cost), iteration=i)
        triple, info = solve_ls(system)
        try:
            K_next = policy_improve(cost, triple)
        except IndefiniteCurvatureError as err:
            raise IndefiniteCurvatureError(
                f"iteration {i}: {err}; with sampled data this usually means "
                "sampling noise dominates, collect more paths or exploration"
            ) from err
        delta = np.inf if prev_P is None else float(
            np.linalg.norm(triple.P - prev_P, "fro")
        )
        records.append(
            ADPIterationRecord(
                index=i,
                triple=triple,
                K=K,
                K_next=K_next,
                delta_P=delta,
                cond_psi=system.cond,
                ls_rank=info["rank"],
                ls_residual=info["residual"],
            )
        )
        if delta < eps:
            status = "converged"
            break
        prev_P = triple.P
        K = K_next
    last = records[-1]
    return ADPResult(
        status=status,
        iterations=tuple(records),
        P=last.triple.P,
        K=last.K_next,
        rank_report=report,
    )
