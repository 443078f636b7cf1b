"""Stochastic constrained optimization for fairness-aware training of small
neural networks: algorithms, oracles, metrics, and a benchmark harness."""

from .data import (
    CsvSchema,
    GroupedDataset,
    Scaler,
    SplitIndices,
    SyntheticConfig,
    apply_scaler,
    fit_scaler,
    generate_synthetic,
    load_csv,
    sample_group_balanced_batch,
    sample_objective_batch,
    stratified_split,
    write_csv,
)
from .metrics import (
    FairnessReport,
    PredictionSet,
    fairness_report,
    independence_gap,
    inaccuracy,
    separation_gap,
    sufficiency_gap,
    wasserstein_1d,
)
from .net import NetworkSpec, backward, bce_loss, forward
from .optim import (
    AlmConfig,
    SgdConfig,
    SswConfig,
    StGhConfig,
    run_alm,
    run_sgd,
    run_ssl_alm,
    run_ssw,
    run_stgh,
)
from .problem import ConstraintSpec, FairnessProblem
from .qp import GhostSolution, GhostSubproblem, compute_kappa, mlmc_direction, solve_ghost_qp

__version__ = "0.1.0"

__all__ = [
    "AlmConfig",
    "ConstraintSpec",
    "CsvSchema",
    "FairnessProblem",
    "FairnessReport",
    "GhostSolution",
    "GhostSubproblem",
    "GroupedDataset",
    "NetworkSpec",
    "PredictionSet",
    "Scaler",
    "SgdConfig",
    "SplitIndices",
    "SswConfig",
    "StGhConfig",
    "SyntheticConfig",
    "apply_scaler",
    "backward",
    "bce_loss",
    "compute_kappa",
    "fairness_report",
    "fit_scaler",
    "forward",
    "generate_synthetic",
    "inaccuracy",
    "independence_gap",
    "load_csv",
    "mlmc_direction",
    "run_alm",
    "run_sgd",
    "run_ssl_alm",
    "run_ssw",
    "run_stgh",
    "sample_group_balanced_batch",
    "sample_objective_batch",
    "separation_gap",
    "solve_ghost_qp",
    "stratified_split",
    "sufficiency_gap",
    "wasserstein_1d",
    "write_csv",
]
