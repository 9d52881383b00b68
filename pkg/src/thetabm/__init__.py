"""Riemann-Theta and product Jacobi-Theta Boltzmann machines.

Density estimation with theta-function Boltzmann machines, trained by score
matching (Fisher cost) or maximum likelihood through CMA-ES.
"""
from .costs import fisher_cost, nll_cost
from .model import (
    InfeasibleParamsError,
    RtbmParams,
    affine_pushforward,
    count_params,
    is_feasible,
    laplacian_terms,
    log_density,
    sample,
    score,
)
from .optimize import CmaConfig, FitReport, cmaes_minimize, fit, pretrain_marginals
from .preprocess import AffineMap, fit_zscore_pca
from .rtheta import rt_eval_factorized, rt_eval_full
from .samples import Sample
from .theta1d import theta_tilde

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "CmaConfig",
    "FitReport",
    "InfeasibleParamsError",
    "RtbmParams",
    "Sample",
    "affine_pushforward",
    "cmaes_minimize",
    "count_params",
    "fisher_cost",
    "fit",
    "fit_zscore_pca",
    "is_feasible",
    "laplacian_terms",
    "log_density",
    "nll_cost",
    "pretrain_marginals",
    "rt_eval_factorized",
    "rt_eval_full",
    "sample",
    "score",
    "theta_tilde",
    "__version__",
]
