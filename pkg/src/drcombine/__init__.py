"""Treatment-effect estimation from a probability survey plus a non-probability sample."""

from .data import (
    CombinedDataset,
    ConfigError,
    DataError,
    ModelSpec,
    NuisanceParams,
    NumericalError,
    PenaltyConfig,
    UnitRecord,
    dataset_from_csv,
    dataset_to_csv,
    derive_pop_size,
    validate,
)
from .estimators import (
    KINDS,
    RosterConfig,
    estimate_dr,
    estimate_dr_joint,
    estimate_ipw,
    estimate_or,
    estimate_roster,
    estimate_with_details,
    mean_diff,
)
from .penalty import hard_threshold, lqa_diag, penalized_score, scad_q
from .scores import (
    jacobian_eta,
    jacobian_mu,
    joint_jacobian_eta,
    joint_jacobian_mu,
    phi,
    score_u,
    score_u_joint,
)
from .solver import (
    CvResult,
    FitResult,
    cross_validate,
    default_grid,
    fit_penalized,
    initial_omega,
    solve_penalized,
)
from .simulate import (
    CASE_NAMES,
    CaseSpec,
    case_spec,
    compute_metrics,
    generate_joint_case,
    generate_population,
    draw_samples,
    run_one_replicate,
    run_replications,
)
from .variance import (
    AteReport,
    TwoStepFit,
    V2Parts,
    Z_95,
    dr_se,
    sandwich_penalized,
    sandwich_unpenalized,
    v1_hat,
    v2_hat,
)

__version__ = "0.1.0"

__all__ = [
    "AteReport",
    "CASE_NAMES",
    "CaseSpec",
    "CombinedDataset",
    "ConfigError",
    "CvResult",
    "DataError",
    "FitResult",
    "KINDS",
    "ModelSpec",
    "NuisanceParams",
    "NumericalError",
    "PenaltyConfig",
    "RosterConfig",
    "TwoStepFit",
    "UnitRecord",
    "V2Parts",
    "Z_95",
    "case_spec",
    "compute_metrics",
    "cross_validate",
    "dataset_from_csv",
    "dataset_to_csv",
    "default_grid",
    "derive_pop_size",
    "dr_se",
    "draw_samples",
    "estimate_dr",
    "estimate_dr_joint",
    "estimate_ipw",
    "estimate_or",
    "estimate_roster",
    "estimate_with_details",
    "fit_penalized",
    "generate_joint_case",
    "generate_population",
    "hard_threshold",
    "initial_omega",
    "jacobian_eta",
    "jacobian_mu",
    "joint_jacobian_eta",
    "joint_jacobian_mu",
    "lqa_diag",
    "mean_diff",
    "penalized_score",
    "phi",
    "run_one_replicate",
    "run_replications",
    "sandwich_penalized",
    "sandwich_unpenalized",
    "scad_q",
    "score_u",
    "score_u_joint",
    "solve_penalized",
    "v1_hat",
    "v2_hat",
    "validate",
    "__version__",
]
