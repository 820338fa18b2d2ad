"""Gaussian-process smoothing, forecasting, and improvement-factor analytics
for two-dimensional (age, year) mortality surfaces."""

__version__ = "0.1.0"

from .data import (
    MortalityCell,
    MortalityTable,
    Standardizer,
    SubsetSpec,
    load_table,
    make_standardizer,
    save_table,
    subset,
)
from .glm import GlmFit, fit_poisson_glm, glm_predict
from .gp import (
    FactorizationError,
    FittedGP,
    PosteriorSummary,
    ResidualDiagnostics,
    fit_gls,
    fit_gls_xy,
    log_marginal_likelihood,
    log_marginal_likelihood_xy,
    predict,
    predict_observation,
    predict_year_derivative,
    residuals,
    sample_paths,
)
from .hyperfit import FitConfig, FitResult, evaluate_grid, fit_mle
from .improvement import ImprovementCurve, mi_back_gp, mi_back_observed, mi_centered, mi_diff_gp
from .kernels import (
    ConstantNoise,
    DeltaMethodNoise,
    KernelFamily,
    KernelHyperparams,
    cov,
    cov_matrix,
    cross_cov,
    d2cov_dyr2,
    dcov_dyr,
    noise_diagonal,
)
from .means import MeanBasis, basis_matrix, eval_basis, eval_mean
from .serialize import load_model, save_model
from .updating import UpdateReport, update, update_report

__all__ = [
    "MortalityCell",
    "MortalityTable",
    "Standardizer",
    "SubsetSpec",
    "load_table",
    "make_standardizer",
    "save_table",
    "subset",
    "GlmFit",
    "fit_poisson_glm",
    "glm_predict",
    "FactorizationError",
    "FittedGP",
    "PosteriorSummary",
    "ResidualDiagnostics",
    "fit_gls",
    "fit_gls_xy",
    "log_marginal_likelihood",
    "log_marginal_likelihood_xy",
    "predict",
    "predict_observation",
    "predict_year_derivative",
    "residuals",
    "sample_paths",
    "FitConfig",
    "FitResult",
    "evaluate_grid",
    "fit_mle",
    "ImprovementCurve",
    "mi_back_gp",
    "mi_back_observed",
    "mi_centered",
    "mi_diff_gp",
    "ConstantNoise",
    "DeltaMethodNoise",
    "KernelFamily",
    "KernelHyperparams",
    "cov",
    "cov_matrix",
    "cross_cov",
    "d2cov_dyr2",
    "dcov_dyr",
    "noise_diagonal",
    "MeanBasis",
    "basis_matrix",
    "eval_basis",
    "eval_mean",
    "load_model",
    "save_model",
    "UpdateReport",
    "update",
    "update_report",
]
