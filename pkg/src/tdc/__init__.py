"""Tensor-decomposition compression toolkit.

Decomposes 4-way convolution weights (CP, Tucker, Tensor Train) at target
retained-parameter fractions, computes weight- and feature-space
approximation errors, evaluates compressed models, and quantifies how well
the errors rank-correlate with model performance across decomposition
choices.
"""

from .correlation import Measurement, TauSummary, grouped_tau, kendall_tau
from .decomp import (
    CpFactorization,
    TtFactorization,
    TuckerFactorization,
    cp_als,
    load_factorization,
    param_count,
    reconstruct,
    save_factorization,
    tt_svd,
    tucker_hosvd,
)
from .linalg import SvdResult, solve_least_squares, svd
from .metrics import ErrorReport, checkpoint_change, error_report, feature_errors, weight_errors
from .ranks import RankSpec, solve_cp_rank, solve_ranks, solve_tt_ranks, solve_tucker_ranks
from .study import StudyConfig, emit_reports, ingest_performance, run_study
from .tensor import fold, frobenius_norm, mode_n_product, read_tensor, unfold, write_tensor

__all__ = [
    "CpFactorization",
    "ErrorReport",
    "Measurement",
    "RankSpec",
    "StudyConfig",
    "SvdResult",
    "TauSummary",
    "TtFactorization",
    "TuckerFactorization",
    "checkpoint_change",
    "cp_als",
    "emit_reports",
    "error_report",
    "feature_errors",
    "fold",
    "frobenius_norm",
    "grouped_tau",
    "ingest_performance",
    "kendall_tau",
    "load_factorization",
    "mode_n_product",
    "param_count",
    "read_tensor",
    "reconstruct",
    "run_study",
    "save_factorization",
    "solve_cp_rank",
    "solve_least_squares",
    "solve_ranks",
    "solve_tt_ranks",
    "solve_tucker_ranks",
    "svd",
    "tt_svd",
    "tucker_hosvd",
    "unfold",
    "weight_errors",
    "write_tensor",
]

__version__ = "0.1.0"
