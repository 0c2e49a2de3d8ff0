"""Bayesian experimental design for precision matrices in Gaussian chain graph models."""

__version__ = "0.1.0"

from .estimators import partial_correlation, steins_loss
from .laplace import d_optimality_score, info_bound, info_gain, marginal_precision, marginal_precision_generic
from .mgig import joint_map_nmgig, kl_posterior_prior, log_normalizer_estimate, mgig_mode, sample_mgig, sample_nw_posterior
from .model import ChainGraphParams, Dataset, fisher_information, log_likelihood, marginal_coefficients, mle, sample_responses
from .priors import (
    FlatPrior,
    GeneralIndependentPrior,
    MGIGParams,
    NormalMGIGPrior,
    NormalWishartPrior,
    log_concavity_check,
    log_prior_density,
    nmgig_posterior,
    nw_posterior,
    preset,
    prior_hessian,
)
from .simlab import (
    ExperimentConfig,
    ToyConfig,
    covariance_model,
    make_design,
    run_kl_experiment,
    run_stein_experiment,
    run_toy,
)

__all__ = [
    "ChainGraphParams",
    "ExperimentConfig",
    "ToyConfig",
    "Dataset",
    "FlatPrior",
    "GeneralIndependentPrior",
    "MGIGParams",
    "NormalMGIGPrior",
    "NormalWishartPrior",
    "covariance_model",
    "d_optimality_score",
    "fisher_information",
    "info_bound",
    "info_gain",
    "joint_map_nmgig",
    "kl_posterior_prior",
    "log_concavity_check",
    "log_likelihood",
    "log_normalizer_estimate",
    "log_prior_density",
    "make_design",
    "marginal_coefficients",
    "marginal_precision",
    "marginal_precision_generic",
    "mgig_mode",
    "mle",
    "nmgig_posterior",
    "nw_posterior",
    "partial_correlation",
    "preset",
    "prior_hessian",
    "run_kl_experiment",
    "run_stein_experiment",
    "run_toy",
    "sample_mgig",
    "sample_nw_posterior",
    "sample_responses",
    "steins_loss",
]
