"""Feasible BB-type optimization over orthogonality constraints.

Minimizes a differentiable F(X) over {X : X^T X = I} (and the generalized
constraint X^T H X = K) with a family of constraint-preserving update
schemes, an adaptive nonmonotone BB line-search loop, low-rank correlation
test problems, and an augmented-Lagrangian wrapper for prescribed entries.
"""

from .manifold import (
    GradientPair,
    StiefelPoint,
    TangentDirection,
    canonical_gradient,
    compute_d_rho,
    feasibility_error,
    optimality_residual,
    random_stiefel,
    tangent_projection,
)
from .retractions import (
    GTAU_NAMES,
    GTAU_SENSITIVE,
    SCHEME_KINDS,
    CurveEvaluation,
    GeneralizedConstraint,
    RetractionScheme,
    gtau_function,
    polar_project,
    qr_positive,
    reevaluate,
    retract_generalized,
    retract_geodesic,
    retract_gradproj,
    retract_lowrank_column,
    retract_new,
    retract_new_controlled,
    retract_polar,
    retract_qr,
    retract_wenyin,
)
from .stepsize import (
    BBState,
    LineSearchError,
    ReferenceState,
    SafeguardParams,
    abb,
    armijo_backtrack,
    bb_long,
    bb_short,
    safeguard,
    update_reference,
)
from .solver import (
    STOP_REASONS,
    SolverConfig,
    SolverReport,
    iterate_once,
    prepare_state,
    solve,
    solve_generalized,
)
from .problems import (
    FixedEntrySet,
    HeterogeneousQuadraticProblem,
    LowRankCorrProblem,
    TraceEigenProblem,
    ex2_matrix,
    ex3_matrix,
    ex3_weights,
    gen_ex2,
    gen_ex3,
    heterogeneous_eval,
    heterogeneous_problem,
    load_matrix,
    lowrank_corr_eval,
    modified_pca_init,
    nlcmres,
    sample_fixed_entries,
    save_matrix_market,
    trace_eigen_eval,
)
from .auglag import (
    AugLagConfig,
    AugLagReport,
    AugLagSubproblem,
    auglag_objective,
    auglag_solve,
)
from .bench import (
    RunRecord,
    aggregate_records,
    compare_schemes,
    drift_demo,
    read_records,
    run_experiment,
    write_records,
)

__version__ = "0.1.0"

__all__ = [
    "GradientPair",
    "StiefelPoint",
    "TangentDirection",
    "canonical_gradient",
    "compute_d_rho",
    "feasibility_error",
    "optimality_residual",
    "random_stiefel",
    "tangent_projection",
    "GTAU_NAMES",
    "GTAU_SENSITIVE",
    "SCHEME_KINDS",
    "CurveEvaluation",
    "GeneralizedConstraint",
    "RetractionScheme",
    "gtau_function",
    "polar_project",
    "qr_positive",
    "reevaluate",
    "retract_generalized",
    "retract_geodesic",
    "retract_gradproj",
    "retract_lowrank_column",
    "retract_new",
    "retract_new_controlled",
    "retract_polar",
    "retract_qr",
    "retract_wenyin",
    "BBState",
    "LineSearchError",
    "ReferenceState",
    "SafeguardParams",
    "abb",
    "armijo_backtrack",
    "bb_long",
    "bb_short",
    "safeguard",
    "update_reference",
    "STOP_REASONS",
    "SolverConfig",
    "SolverReport",
    "iterate_once",
    "prepare_state",
    "solve",
    "solve_generalized",
    "FixedEntrySet",
    "HeterogeneousQuadraticProblem",
    "LowRankCorrProblem",
    "TraceEigenProblem",
    "ex2_matrix",
    "ex3_matrix",
    "ex3_weights",
    "gen_ex2",
    "gen_ex3",
    "heterogeneous_eval",
    "heterogeneous_problem",
    "load_matrix",
    "lowrank_corr_eval",
    "modified_pca_init",
    "nlcmres",
    "sample_fixed_entries",
    "save_matrix_market",
    "trace_eigen_eval",
    "AugLagConfig",
    "AugLagReport",
    "AugLagSubproblem",
    "auglag_objective",
    "auglag_solve",
    "RunRecord",
    "aggregate_records",
    "compare_schemes",
    "drift_demo",
    "read_records",
    "run_experiment",
    "write_records",
    "__version__",
]
