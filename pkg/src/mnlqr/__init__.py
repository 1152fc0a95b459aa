"""Policy iteration for linear-quadratic control with multiplicative noise.

Solves the infinite-horizon stochastic LQ problem

    dx = (A x + B u) ds + (C x + D u) dw,
    J  = E integral (x' Q x + u' R u) ds

two ways: model-based policy iteration on the generalized Riccati
equation, and a data-driven variant that learns the same iterates from
interval expectations of trajectories excited by u = K0 x + e(s).  The
data can come from Monte Carlo simulation, from an exact moment-ODE
engine (useful as a verification oracle), or from a file of externally
measured expectations.
"""

from .adp import (
    ADPIterationRecord,
    ADPResult,
    RankReport,
    RegressionSystem,
    assemble,
    check_rank,
    run_adp,
    solve_ls,
)
from .config import ProblemConfig, load_config, parse_config, with_seed
from .datagen import (
    DataMatrices,
    ExplorationSignal,
    MomentTrace,
    RolloutConfig,
    TrajectoryBatch,
    collect_data_exact,
    collect_data_mc,
    collect_data_mc_streamed,
    eta_Kx,
    eval_exploration,
    propagate_moments,
    simulate_paths,
)
from .errors import (
    ConfigError,
    DefinitenessError,
    DimensionError,
    IndefiniteCurvatureError,
    MnlqrError,
    MomentAccuracyError,
    NonStabilizingGainError,
    NumericalError,
    RankConditionError,
    SimulationBlowupError,
    SymmetryError,
)
from .etaio import load_eta, read_eta, save_eta, write_eta
from .model_pi import (
    CostWeights,
    EvaluationTriple,
    IterationRecord,
    ModelPIResult,
    eval_residual,
    policy_eval,
    policy_improve,
    run_model_pi,
    sare_residual,
)
from .report import RunReport, render_figures, trace_row, write_trace_csv
from .stability import (
    ClosedLoop,
    SystemModel,
    close_loop,
    glyap_solve,
    is_ms_stabilizing,
    ms_abscissa,
    ms_generator,
)
from .vecops import (
    gamma_of_K,
    symmetrize,
    triu_pairs,
    unvec,
    unvech,
    vec,
    vech,
    vecs,
)

__version__ = "0.1.0"

__all__ = [
    "ADPIterationRecord",
    "ADPResult",
    "ClosedLoop",
    "ConfigError",
    "CostWeights",
    "DataMatrices",
    "DefinitenessError",
    "DimensionError",
    "EvaluationTriple",
    "ExplorationSignal",
    "IndefiniteCurvatureError",
    "IterationRecord",
    "MnlqrError",
    "ModelPIResult",
    "MomentAccuracyError",
    "MomentTrace",
    "NonStabilizingGainError",
    "NumericalError",
    "ProblemConfig",
    "RankConditionError",
    "RankReport",
    "RegressionSystem",
    "RolloutConfig",
    "RunReport",
    "SimulationBlowupError",
    "SymmetryError",
    "SystemModel",
    "TrajectoryBatch",
    "assemble",
    "check_rank",
    "close_loop",
    "collect_data_exact",
    "collect_data_mc",
    "collect_data_mc_streamed",
    "eta_Kx",
    "eval_exploration",
    "eval_residual",
    "gamma_of_K",
    "glyap_solve",
    "is_ms_stabilizing",
    "load_config",
    "load_eta",
    "ms_abscissa",
    "ms_generator",
    "parse_config",
    "policy_eval",
    "policy_improve",
    "propagate_moments",
    "read_eta",
    "render_figures",
    "run_adp",
    "run_model_pi",
    "sare_residual",
    "save_eta",
    "simulate_paths",
    "solve_ls",
    "symmetrize",
    "trace_row",
    "triu_pairs",
    "unvec",
    "unvech",
    "vec",
    "vech",
    "vecs",
    "with_seed",
    "write_eta",
    "write_trace_csv",
]
