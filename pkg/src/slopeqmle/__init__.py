"""Quasi-maximum likelihood for binary choice models with slope-direction diagnostics."""

from .dgp import CovariateModel, Dataset, DgpSpec, ErrorModel, ModelParams, ScaleFunction, sample
from .links import LOGISTIC, PROBIT, LinkFamily, get_link, register_link
from .population import IndexLaw, PseudoTrue, pseudo_true_for, solve_pseudo_true
from .qmle import Equal, FitResult, Ratio, Zero, fit, ratio_confint, test_scale_invariant
from .reweight import WeightPlan, compute_weights, fit_weighted

__version__ = "0.1.0"

__all__ = [
    "CovariateModel",
    "Dataset",
    "DgpSpec",
    "Equal",
    "ErrorModel",
    "FitResult",
    "IndexLaw",
    "LOGISTIC",
    "LinkFamily",
    "ModelParams",
    "PROBIT",
    "PseudoTrue",
    "Ratio",
    "ScaleFunction",
    "WeightPlan",
    "Zero",
    "compute_weights",
    "fit",
    "fit_weighted",
    "get_link",
    "pseudo_true_for",
    "ratio_confint",
    "register_link",
    "sample",
    "solve_pseudo_true",
    "test_scale_invariant",
]
