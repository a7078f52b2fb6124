"""Information-theoretic generalization bounds: exact models, bound calculators,
condition checks, mutual-information estimators and a Monte-Carlo engine."""

from .bounds import (
    BoundReport,
    InvalidBound,
    eta_c_bound,
    eta_c_loss_bound,
    fast_subgaussian_bound,
    gaussian_lower_bounds,
    intermediate_bound,
    mi_sqrt_bound,
    psi_inverse,
    rerm_bound,
    subexp_loss_bound,
    subgamma_loss_bound,
)
from .conditions import (
    ConditionReport,
    bernstein_check,
    eta_c_check,
    eta_c_check_samples,
    eta_c_scan,
    v_central_check,
)
from .core import Dataset, LearningTuple, ModelId, ModelParams, RiskRecord, RngStream
from .mc import RateFit, SweepConfig, fit_rate, reproduce_example, run_sweep
from .mi_est import MiEstimate, chain_rule_mi, closed_form_mi, histogram_mi, ksg_mi, mixed_mi
from .model_suite import cgf, closed_form, erm, sample_dataset

__all__ = [
    "BoundReport", "ConditionReport", "Dataset", "InvalidBound", "LearningTuple", "MiEstimate", "ModelId",
    "ModelParams", "RateFit", "RiskRecord", "RngStream", "SweepConfig", "bernstein_check", "cgf",
    "chain_rule_mi", "closed_form", "closed_form_mi", "erm", "eta_c_bound", "eta_c_check", "eta_c_check_samples",
    "eta_c_loss_bound", "eta_c_scan", "fast_subgaussian_bound", "fit_rate", "gaussian_lower_bounds",
    "histogram_mi", "intermediate_bound", "ksg_mi", "mi_sqrt_bound", "mixed_mi", "psi_inverse",
    "reproduce_example", "rerm_bound", "run_sweep", "sample_dataset", "subexp_loss_bound",
    "subgamma_loss_bound", "v_central_check",
]
