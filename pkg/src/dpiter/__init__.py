"""Privacy accounting, reference optimizers, and auditing for projected noisy SGD."""

from .accountant import (
    AccountRequest,
    AccountResult,
    account,
    best_dp,
    epsilon_cyclic,
    epsilon_full_batch,
    epsilon_noisy_sgd,
    epsilon_nonuniform,
    epsilon_strongly_convex,
    renyi_curve,
    rdp_to_dp,
    solve_sigma,
)
from .lowerbound import (
    AuditReport,
    WalkParams,
    rdp_refutation_scale,
    refute_dp,
    simulate_walks,
)
from .pabi import PabiResult, PabiSchedule, evaluate, optimize_geometric_allocations
from .renyi import (
    QuadratureConfig,
    SgmQuery,
    alpha_star,
    gaussian_renyi,
    sgm_divergence,
    sgm_divergence_mc,
)
from .types import (
    InfeasibleBudgetError,
    NumericalError,
    PrivacyParams,
    RenyiCurve,
    RenyiPoint,
    SeededStream,
    UNBOUNDED,
    ValidationResult,
    load_params,
    params_from_json,
    params_to_json,
    validate,
)

__all__ = [
    "AccountRequest",
    "AccountResult",
    "AuditReport",
    "InfeasibleBudgetError",
    "NumericalError",
    "PabiResult",
    "PabiSchedule",
    "PrivacyParams",
    "QuadratureConfig",
    "RenyiCurve",
    "RenyiPoint",
    "SeededStream",
    "SgmQuery",
    "UNBOUNDED",
    "ValidationResult",
    "WalkParams",
    "account",
    "alpha_star",
    "best_dp",
    "epsilon_cyclic",
    "epsilon_full_batch",
    "epsilon_noisy_sgd",
    "epsilon_nonuniform",
    "epsilon_strongly_convex",
    "evaluate",
    "gaussian_renyi",
    "load_params",
    "optimize_geometric_allocations",
    "params_from_json",
    "params_to_json",
    "rdp_refutation_scale",
    "rdp_to_dp",
    "refute_dp",
    "renyi_curve",
    "sgm_divergence",
    "sgm_divergence_mc",
    "simulate_walks",
    "solve_sigma",
    "validate",
]
